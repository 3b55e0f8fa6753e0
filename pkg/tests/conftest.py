from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import strategies as st

from heatkernels.generators import gen_path, gen_sierpinski, gen_two_weighted_tree
from heatkernels.network import MeasuredNetwork, build_network
from heatkernels.resistance import resistance_metric
from heatkernels.volume import fit_model, volume_profile


def triangle_spec(conductance: float = 1.0) -> dict:
    return {
        "name": "triangle",
        "vertices": [{"id": v, "measure": 1.0} for v in ("a", "b", "c")],
        "edges": [
            {"u": "a", "v": "b", "conductance": conductance},
            {"u": "b", "v": "c", "conductance": conductance},
            {"u": "a", "v": "c", "conductance": conductance},
        ],
    }


def two_state_spec(mu1: float, mu2: float, c: float) -> dict:
    return {
        "name": "two-state",
        "vertices": [{"id": "x", "measure": mu1}, {"id": "y", "measure": mu2}],
        "edges": [{"u": "x", "v": "y", "conductance": c}],
    }


@st.composite
def networks(draw, min_vertices: int = 2, max_vertices: int = 10) -> MeasuredNetwork:
    """ランダム全域木＋追加辺の連結な回路網（質量・コンダクタンスは [0.1, 10]）。"""
    n = draw(st.integers(min_value=min_vertices, max_value=max_vertices))
    weight = st.floats(min_value=0.1, max_value=10.0, allow_nan=False, allow_infinity=False)
    pairs: dict[tuple[int, int], float] = {}
    for v in range(1, n):
        parent = draw(st.integers(min_value=0, max_value=v - 1))
        pairs[(parent, v)] = draw(weight)
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=n))
    for u, v in extra:
        if u != v:
            pairs.setdefault((min(u, v), max(u, v)), draw(weight))
    spec = {
        "name": "random",
        "vertices": [{"id": f"v{i}", "measure": draw(weight)} for i in range(n)],
        "edges": [{"u": f"v{u}", "v": f"v{v}", "conductance": c} for (u, v), c in pairs.items()],
    }
    return build_network(spec)


@pytest.fixture
def triangle() -> MeasuredNetwork:
    return build_network(triangle_spec())


@pytest.fixture(scope="session")
def path101():
    net = gen_path(101)
    metric = resistance_metric(net)
    profile = volume_profile(net, metric)
    return net, metric, profile, fit_model(profile)


@pytest.fixture(scope="session")
def gasket5():
    net = gen_sierpinski(5)
    metric = resistance_metric(net)
    profile = volume_profile(net, metric)
    return net, metric, profile, fit_model(profile)


@pytest.fixture(scope="session")
def tree3():
    net = gen_two_weighted_tree(3)
    metric = resistance_metric(net)
    profile = volume_profile(net, metric)
    return net, metric, profile, fit_model(profile, "logarithmic")


@pytest.fixture
def write_json(tmp_path: Path):
    def _write(name: str, payload: dict) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
