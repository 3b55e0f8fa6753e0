from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import conf
from .exceptions import DisconnectedNetworkError, NetworkValidationError, NumericalInvariantError

logger = logging.getLogger(__name__)

# 頂点ごとの実数値（頂点の内部インデックス順）
VertexFunction = npt.NDArray[np.float64]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeasuredNetwork:
    """
    有限の測度付き電気回路網 (X, R, μ) の離散版。

    - ids: 頂点ID（ファイル順で内部インデックスを割り当てる）
    - measure: 頂点の質量 μ(x) > 0
    - edges: (m, 2) の頂点インデックス組（u < v、辞書順）
    - conductance: 辺のコンダクタンス > 0

    構築後は不変。並列ワーカー間で共有してよい。
    """

    name: str
    ids: tuple[str, ...]
    measure: np.ndarray
    edges: np.ndarray
    conductance: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    @property
    def total_mass(self) -> float:
        return float(self.measure.sum())

    @cached_property
    def _index(self) -> dict[str, int]:
        return {vid: i for i, vid in enumerate(self.ids)}

    def index(self, vertex_id: str) -> int:
        try:
            return self._index[vertex_id]
        except KeyError:
            raise NetworkValidationError("unknown vertex id", item=vertex_id) from None

    @cached_property
    def conductance_matrix(self) -> np.ndarray:
        c = np.zeros((self.n, self.n))
        u, v = self.edges[:, 0], self.edges[:, 1]
        c[u, v] = self.conductance
        c[v, u] = self.conductance
        return _readonly(c)

    @cached_property
    def laplacian(self) -> np.ndarray:
        """
        コンダクタンス・ラプラシアン K = D - C（測度を含まない。生成作用素は -μ^{-1} K）。
        """
        c = self.conductance_matrix
        k = np.diag(c.sum(axis=1)) - c
        return _readonly(k)

    @cached_property
    def adjacency(self) -> csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * self.m, dtype=np.int8)
        return csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(self.n, self.n))

    @cached_property
    def min_edge_resistance(self) -> float:
        return float(1.0 / self.conductance.max()) if self.m else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "vertices": [{"id": vid, "measure": float(mu)} for vid, mu in zip(self.ids, self.measure)],
            "edges": [
                {"u": self.ids[int(u)], "v": self.ids[int(v)], "conductance": float(c)}
                for (u, v), c in zip(self.edges, self.conductance)
            ],
        }


def build_network(spec: Mapping[str, Any]) -> MeasuredNetwork:
    """
    JSON 形式の記述 {name, vertices:[{id, measure}], edges:[{u, v, conductance}]} から回路網を作る。

    - 頂点の内部インデックスは記述順
    - 辺は (小さい方, 大きい方) に正規化して辞書順に並べる
    - 非連結・非正の重み・重複辺・自己ループは NetworkValidationError
    """
    name = str(spec.get("name") or "network")
    raw_vertices = list(spec.get("vertices") or [])
    raw_edges = list(spec.get("edges") or [])

    if not raw_vertices:
        raise NetworkValidationError("network needs at least one vertex")
    if len(raw_vertices) > conf.get("MAX_VERTICES"):
        raise NetworkValidationError("too many vertices", item=len(raw_vertices))

    ids: list[str] = []
    measure: list[float] = []
    seen_ids: set[str] = set()
    for item in raw_vertices:
        vid = str(item.get("id"))
        mu = float(item.get("measure", 0.0))
        if vid in seen_ids:
            raise NetworkValidationError("duplicate vertex id", item=vid)
        if not np.isfinite(mu) or mu <= 0.0:
            raise NetworkValidationError("non-positive measure", item=item)
        seen_ids.add(vid)
        ids.append(vid)
        measure.append(mu)
    index = {vid: i for i, vid in enumerate(ids)}

    pairs: dict[tuple[int, int], float] = {}
    for item in raw_edges:
        u_id, v_id = str(item.get("u")), str(item.get("v"))
        if u_id not in index or v_id not in index:
            raise NetworkValidationError("edge refers to unknown vertex", item=item)
        u, v = index[u_id], index[v_id]
        if u == v:
            raise NetworkValidationError("self-loop", item=item)
        c = float(item.get("conductance", 0.0))
        if not np.isfinite(c) or c <= 0.0:
            raise NetworkValidationError("non-positive conductance", item=item)
        key = (min(u, v), max(u, v))
        if key in pairs:
            raise NetworkValidationError("duplicate edge", item=item)
        pairs[key] = c

    keys = sorted(pairs)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    cond = np.array([pairs[k] for k in keys], dtype=float)

    n = len(ids)
    if n > 1:
        if not keys:
            raise DisconnectedNetworkError(f"disconnected network ({n} components)", item=ids[1])
        adj = csr_matrix((np.ones(len(keys)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        n_components, labels = connected_components(adj, directed=False)
        if n_components > 1:
            stray = ids[int(np.flatnonzero(labels != labels[0])[0])]
            raise DisconnectedNetworkError(f"disconnected network ({n_components} components)", item=stray)

    net = MeasuredNetwork(
        name=name,
        ids=tuple(ids),
        measure=_readonly(np.array(measure, dtype=float)),
        edges=_readonly(edges),
        conductance=_readonly(cond),
    )
    logger.debug("built network %s: n=%d m=%d", net.name, net.n, net.m)
    return net


def load_network(path: Path | str) -> MeasuredNetwork:
    return build_network(json.loads(Path(path).read_text(encoding="utf-8")))


def save_network(net: MeasuredNetwork, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(net.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def dirichlet_form(net: MeasuredNetwork, f: VertexFunction, g: VertexFunction) -> float:
    """
    E(f, g) = Σ_{辺 uv} c_uv (f(u)-f(v)) (g(u)-g(v))
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (net.n,) or g.shape != (net.n,):
        raise ValueError(f"vertex function must have length {net.n}")
    u, v = net.edges[:, 0], net.edges[:, 1]
    return float(np.sum(net.conductance * (f[u] - f[v]) * (g[u] - g[v])))


def dirichlet_energy(net: MeasuredNetwork, f: VertexFunction) -> float:
    return dirichlet_form(net, f, f)


def grounded_factor(net: MeasuredNetwork, grounded: np.ndarray) -> tuple[np.ndarray, Any]:
    """
    grounded（境界）以外の頂点で K を Cholesky 分解する。戻り値は (内部頂点インデックス, 分解)。
    境界が空でなく回路網が連結なら正定値。
    """
    mask = np.ones(net.n, dtype=bool)
    mask[grounded] = False
    interior = np.flatnonzero(mask)
    if interior.size == 0:
        return interior, None
    block = net.laplacian[np.ix_(interior, interior)]
    try:
        factor = scipy.linalg.cho_factor(block, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalInvariantError("grounded Laplacian is singular (empty boundary?)") from exc
    return interior, factor


def solve_grounded(
    net: MeasuredNetwork,
    boundary: Mapping[int, float],
    source: Optional[VertexFunction] = None,
) -> VertexFunction:
    """
    境界値を固定して Σ_y c_xy (u(x)-u(y)) = μ(x) source(x) を内部頂点で解く。

    - 直接 Cholesky 分解 + 反復改良（相対残差 SOLVER_RTOL を目標）
    - source=0 なら最大値原理が成り立つ
    """
    if not boundary:
        raise ValueError("boundary must be non-empty")
    b_idx = np.array(sorted(int(k) for k in boundary), dtype=np.int64)
    if b_idx.min() < 0 or b_idx.max() >= net.n:
        raise NetworkValidationError("boundary vertex out of range", item=int(b_idx.max()))

    u = np.zeros(net.n)
    u[b_idx] = [float(boundary[int(k)]) for k in b_idx]
    interior, factor = grounded_factor(net, b_idx)
    if factor is None:
        return u

    src = np.zeros(net.n) if source is None else np.asarray(source, dtype=float)
    k = net.laplacian
    rhs = net.measure[interior] * src[interior] - k[np.ix_(interior, b_idx)] @ u[b_idx]
    block = k[np.ix_(interior, interior)]

    x = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    rtol = conf.get("SOLVER_RTOL")
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    for _ in range(3):
        residual = rhs - block @ x
        if np.linalg.norm(residual) <= rtol * scale:
            break
        x += scipy.linalg.cho_solve(factor, residual, check_finite=False)

    rel = float(np.linalg.norm(rhs - block @ x) / scale)
    if rel > 1e-8:
        raise NumericalInvariantError(f"grounded solve did not converge (relative residual {rel:.3e})")
    if rel > rtol:
        logger.debug("grounded solve residual %.3e above target %.1e", rel, rtol)

    u[interior] = x
    return u
