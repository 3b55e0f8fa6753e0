from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from . import conf
from .exceptions import (
    InvalidRadiusError,
    NoComplementError,
    NumericalInvariantError,
    OverlappingSetsError,
)
from .network import MeasuredNetwork, dirichlet_energy, grounded_factor, solve_grounded

logger = logging.getLogger(__name__)

# chaining DP の列ブロック幅（N×N の一時配列を作らないため）
_DP_BLOCK = 512

# 開球の境界。実現値ちょうどの頂点は丸め誤差に関係なく球の外
BALL_RTOL = 1e-9


def open_ball_mask(row: np.ndarray, r: float) -> np.ndarray:
    """R(x, ·) < r を相対誤差 BALL_RTOL で判定する。"""
    return row < r * (1.0 - BALL_RTOL)


@dataclass(frozen=True, eq=False)
class ResistanceMetric:
    """
    全頂点対の有効抵抗 R(x, y)（単位: オーム）。
    """

    network: MeasuredNetwork
    matrix: np.ndarray

    def __call__(self, x: int, y: int) -> float:
        return float(self.matrix[x, y])

    @cached_property
    def distinct_values(self) -> np.ndarray:
        """正の抵抗値（昇順・重複なし）。半径グリッドの候補。"""
        vals = self.matrix[np.triu_indices(self.network.n, k=1)]
        vals = np.unique(np.round(vals, 12))
        return vals[vals > 0.0]

    @cached_property
    def diameter(self) -> float:
        return float(self.matrix.max())

    @cached_property
    def min_positive(self) -> float:
        vals = self.distinct_values
        return float(vals[0]) if vals.size else 0.0

    @cached_property
    def center(self) -> int:
        """離心率最小の頂点（同率ならインデックス最小）。"""
        return int(np.argmin(self.matrix.max(axis=1)))

    def to_frame(self) -> pd.DataFrame:
        ids = list(self.network.ids)
        return pd.DataFrame(self.matrix, index=pd.Index(ids, name="vertex"), columns=ids)

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, float_format="%.12g")
        return path


@dataclass(frozen=True)
class ResistanceBall:
    """
    抵抗球 {y : R(center, y) < radius} のうち center を含む（グラフとしての）連結成分。
    """

    center: int
    radius: float
    members: tuple[int, ...]
    volume: float

    def __contains__(self, vertex: object) -> bool:
        return vertex in self._member_set

    @cached_property
    def _member_set(self) -> frozenset[int]:
        return frozenset(self.members)

    def member_array(self) -> np.ndarray:
        return np.array(self.members, dtype=np.int64)

    def complement(self, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        mask[list(self.members)] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class CoverResult:
    center: int
    radius: float
    eps: float
    centers: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.centers)

    def as_dict(self) -> dict[str, Any]:
        return {
            "center": self.center,
            "radius": self.radius,
            "eps": self.eps,
            "centers": list(self.centers),
            "size": self.size,
        }


@dataclass(frozen=True)
class ChainProbe:
    x: int
    y: int
    chain: tuple[int, ...]
    steps: tuple[float, ...]
    constant: float

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def max_step(self) -> float:
        return max(self.steps)

    def as_dict(self) -> dict[str, Any]:
        return {
            "x": self.x,
            "y": self.y,
            "n": self.n,
            "chain": list(self.chain),
            "steps": list(self.steps),
            "constant": self.constant,
        }


@dataclass(frozen=True)
class ChainingReport:
    """
    連鎖条件の経験的検査。worst_constant が CC_MAX_CONSTANT 以下なら passed。
    """

    worst_constant: float
    threshold: float
    per_pair: tuple[dict[str, Any], ...]

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst_constant) and self.worst_constant <= self.threshold)

    def as_dict(self) -> dict[str, Any]:
        return {
            "worst_constant": self.worst_constant,
            "threshold": self.threshold,
            "passed": self.passed,
            "pairs": list(self.per_pair),
        }


def _vertex_set(vertices: Iterable[int], n: int) -> np.ndarray:
    arr = np.unique(np.asarray(list(vertices), dtype=np.int64))
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError("vertex index out of range")
    return arr


def effective_resistance(net: MeasuredNetwork, a: Iterable[int], b: Iterable[int]) -> float:
    """
    R(A, B) = 1 / inf{E(f,f) : f|_A = 1, f|_B = 0}。最小化元は調和関数（solve_grounded）。
    """
    a_idx = _vertex_set(a, net.n)
    b_idx = _vertex_set(b, net.n)
    if a_idx.size == 0 or b_idx.size == 0:
        raise ValueError("vertex sets must be non-empty")
    if np.intersect1d(a_idx, b_idx).size:
        raise OverlappingSetsError(f"sets overlap at {np.intersect1d(a_idx, b_idx).tolist()}")

    boundary = {int(i): 1.0 for i in a_idx}
    boundary.update({int(j): 0.0 for j in b_idx})
    potential = solve_grounded(net, boundary)
    return 1.0 / dirichlet_energy(net, potential)


def resistance_metric(net: MeasuredNetwork) -> ResistanceMetric:
    """
    頂点 0 を接地した K の逆行列 G から R(x,y) = G_xx + G_yy - 2 G_xy を作る。
    """
    n = net.n
    if n == 1:
        return ResistanceMetric(network=net, matrix=np.zeros((1, 1)))

    interior, factor = grounded_factor(net, np.array([0], dtype=np.int64))
    green = np.zeros((n, n))
    green[np.ix_(interior, interior)] = scipy.linalg.cho_solve(factor, np.eye(interior.size), check_finite=False)
    d = np.diag(green)
    r = d[:, None] + d[None, :] - 2.0 * green
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 0.0)
    np.clip(r, 0.0, None, out=r)
    r.setflags(write=False)
    logger.debug("resistance metric for %s: diameter=%.6g", net.name, r.max())
    return ResistanceMetric(network=net, matrix=r)


def _component_containing(metric: ResistanceMetric, mask: np.ndarray, x: int) -> np.ndarray:
    idx = np.flatnonzero(mask)
    sub = metric.network.adjacency[idx][:, idx]
    _, labels = connected_components(sub, directed=False)
    pos = int(np.searchsorted(idx, x))
    return idx[labels == labels[pos]]


def resistance_ball(metric: ResistanceMetric, x: int, r: float) -> ResistanceBall:
    if not np.isfinite(r) or r <= 0.0:
        raise InvalidRadiusError(f"radius must be positive (got {r})")
    mask = open_ball_mask(metric.matrix[x], r)
    members = _component_containing(metric, mask, x)
    volume = float(metric.network.measure[members].sum())
    return ResistanceBall(center=int(x), radius=float(r), members=tuple(int(v) for v in members), volume=volume)


def escape_resistance(
    net: MeasuredNetwork,
    ball: ResistanceBall,
    metric: Optional[ResistanceMetric] = None,
) -> float:
    """
    R(center, B^c)。metric を渡すと R(x,B^c) <= min_{y∉B} R(x,y) を検査する。
    """
    outside = ball.complement(net.n)
    if outside.size == 0:
        raise NoComplementError(f"ball B({ball.center}, {ball.radius}) covers the whole network")
    value = effective_resistance(net, [ball.center], outside)
    if metric is not None:
        nearest = float(metric.matrix[ball.center, outside].min())
        if value > nearest * (1.0 + 1e-9):
            raise NumericalInvariantError(f"escape resistance {value} exceeds nearest exterior resistance {nearest}")
    if value > ball.radius * (1.0 + 1e-9):
        logger.debug("escape resistance %.6g above radius %.6g (radius not an attained value)", value, ball.radius)
    return value


def greedy_cover(metric: ResistanceMetric, x: int, r: float, eps: float) -> CoverResult:
    """
    B(x, r) を半径 eps*r の球で覆う。未被覆の頂点のうちインデックス最小のものを次の中心にする。
    """
    if not (0.0 < eps <= 0.5):
        raise InvalidRadiusError(f"shrink factor must lie in (0, 1/2] (got {eps})")
    ball = resistance_ball(metric, x, r)
    members = ball.member_array()
    small = eps * r
    covered = np.zeros(metric.network.n, dtype=bool)
    centers: list[int] = []
    for v in members:
        if covered[v]:
            continue
        centers.append(int(v))
        covered |= open_ball_mask(metric.matrix[v], small)

    if not covered[members].all():
        raise NumericalInvariantError("greedy cover left ball members uncovered")
    if len(centers) > 1:
        sep = metric.matrix[np.ix_(centers, centers)]
        off = sep[~np.eye(len(centers), dtype=bool)]
        if off.min() < small * (1.0 - BALL_RTOL):
            raise NumericalInvariantError("greedy cover centres closer than eps*r")
    return CoverResult(center=int(x), radius=float(r), eps=float(eps), centers=tuple(centers))


def _minimax_chain(matrix: np.ndarray, x: int, n: int, keep_parents: bool) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    best[k, v] = min over chains x=x_0..x_k=v of max_i R(x_{i-1}, x_i)。
    連鎖の点は任意の頂点でよく（隣接は要求しない）、抵抗距離の完全グラフ上で動く。
    """
    size = matrix.shape[0]
    best = np.full((n + 1, size), np.inf)
    best[0, x] = 0.0
    parents = np.zeros((n, size), dtype=np.int64) if keep_parents else None
    for k in range(1, n + 1):
        prev = best[k - 1][:, None]
        for start in range(0, size, _DP_BLOCK):
            stop = min(start + _DP_BLOCK, size)
            cand = np.maximum(prev, matrix[:, start:stop])
            arg = np.argmin(cand, axis=0)
            best[k, start:stop] = cand[arg, np.arange(stop - start)]
            if parents is not None:
                parents[k - 1, start:stop] = arg
    return best, parents


def chaining_probe(metric: ResistanceMetric, x: int, y: int, n: int) -> ChainProbe:
    """
    x=x_0, ..., x_n=y のうち最大ステップ抵抗が最小の頂点列と、連鎖条件の経験定数
    max_i R(x_{i-1}, x_i) * n / R(x, y) を返す。
    連続する2点が辺で結ばれている必要はない。
    """
    if n < 1:
        raise ValueError("chain length must be >= 1")
    if x == y:
        raise ValueError("chaining probe needs distinct endpoints")
    _, parents = _minimax_chain(metric.matrix, x, n, keep_parents=True)
    chain = [int(y)]
    for k in range(n - 1, -1, -1):
        chain.append(int(parents[k, chain[-1]]))
    chain.reverse()
    steps = tuple(float(metric.matrix[a, b]) for a, b in zip(chain[:-1], chain[1:]))
    constant = max(steps) * n / metric(x, y)
    return ChainProbe(x=int(x), y=int(y), chain=tuple(chain), steps=steps, constant=float(constant))


def default_probe_pairs(metric: ResistanceMetric, count: int = 6) -> list[tuple[int, int]]:
    """
    直径を実現する対・中心から最遠点への対・等間隔インデックスの対（決定的）。
    """
    n = metric.network.n
    if n < 2:
        return []
    pairs: list[tuple[int, int]] = []
    far = np.unravel_index(int(np.argmax(metric.matrix)), metric.matrix.shape)
    pairs.append((int(far[0]), int(far[1])))
    c = metric.center
    pairs.append((c, int(np.argmax(metric.matrix[c]))))
    for i in np.linspace(0, n - 1, count, dtype=np.int64)[1:]:
        if int(i) != 0:
            pairs.append((0, int(i)))
    seen: set[tuple[int, int]] = set()
    unique = []
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        if a != b and key not in seen:
            seen.add(key)
            unique.append((a, b))
    return unique[:count]


def probe_chaining(metric: ResistanceMetric, pairs: Optional[Sequence[tuple[int, int]]] = None) -> ChainingReport:
    """
    各対で n = 1..min(CHAIN_PROBE_MAX_N, floor(R/r_min)) の最悪定数を求める。
    r_min（最小の正の抵抗）より細かい連鎖は有限グラフでは作れないので打ち切る。
    """
    pairs = list(pairs) if pairs is not None else default_probe_pairs(metric)
    cap = int(conf.get("CHAIN_PROBE_MAX_N"))
    r_min = metric.min_positive
    rows: list[dict[str, Any]] = []
    worst = 0.0
    for x, y in pairs:
        rxy = metric(x, y)
        n_max = max(1, min(cap, int(np.floor(rxy / r_min + 1e-9)))) if r_min > 0 else 1
        best, _ = _minimax_chain(metric.matrix, x, n_max, keep_parents=False)
        ns = np.arange(1, n_max + 1)
        constants = best[1:, y] * ns / rxy
        k = int(np.argmax(constants))
        worst = max(worst, float(constants[k]))
        rows.append({"x": int(x), "y": int(y), "n_max": int(n_max), "worst_n": int(ns[k]), "constant": float(constants[k])})
    threshold = float(conf.get("CC_MAX_CONSTANT"))
    report = ChainingReport(worst_constant=worst, threshold=threshold, per_pair=tuple(rows))
    logger.info("chaining probe: worst constant %.4g (threshold %.3g) -> %s", worst, threshold, "pass" if report.passed else "fail")
    return report
