from __future__ import annotations

import logging
from collections import deque
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

from .network import MeasuredNetwork, build_network

if TYPE_CHECKING:
    from .schemas import GeneratorSpec

logger = logging.getLogger(__name__)

Point = tuple[Fraction, Fraction]

# 部分三角形の配置（原点からのオフセット, 縮小率）
SG2_PATTERN: tuple[tuple[tuple[int, int], int], ...] = (((0, 0), 2), ((1, 0), 2), ((0, 1), 2))
SG3_PATTERN: tuple[tuple[tuple[int, int], int], ...] = tuple(
    ((i, j), 3) for j in range(3) for i in range(3) if i + j <= 2
)
PATTERNS = (SG2_PATTERN, SG3_PATTERN)

MAX_GASKET_LEVEL = 6
MAX_DENDRITE_ATTEMPTS = 1000


def seeded_rng(seed: int) -> np.random.Generator:
    """Philox4x64-10（カウンタ方式）。同じ seed なら実装をまたいで同じ列になる。"""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _assemble(
    name: str,
    ids: Sequence[str],
    measure: Sequence[float],
    edges: Iterable[tuple[int, int]],
    conductance: Optional[Sequence[float]] = None,
) -> MeasuredNetwork:
    edges = list(edges)
    cond = [1.0] * len(edges) if conductance is None else list(conductance)
    spec = {
        "name": name,
        "vertices": [{"id": vid, "measure": float(mu)} for vid, mu in zip(ids, measure)],
        "edges": [{"u": ids[u], "v": ids[v], "conductance": float(c)} for (u, v), c in zip(edges, cond)],
    }
    return build_network(spec)


def gen_path(n: int) -> MeasuredNetwork:
    if n < 2:
        raise ValueError("path needs at least 2 vertices")
    return _assemble(f"path-{n}", [str(i) for i in range(n)], [1.0] * n, ((i, i + 1) for i in range(n - 1)))


def gen_star(k: int) -> MeasuredNetwork:
    if k < 1:
        raise ValueError("star needs at least one leg")
    return _assemble(f"star-{k}", [str(i) for i in range(k + 1)], [1.0] * (k + 1), ((0, i) for i in range(1, k + 1)))


def gen_tree(
    parents: Sequence[Optional[int]],
    measure: Optional[Sequence[float]] = None,
    name: str = "tree",
) -> MeasuredNetwork:
    """
    parents[i] は頂点 i の親（根は None か負数）。根はちょうど1つ。
    """
    roots = [i for i, p in enumerate(parents) if p is None or p < 0]
    if len(roots) != 1:
        raise ValueError(f"tree needs exactly one root (got {len(roots)})")
    n = len(parents)
    edges = [(int(p), i) for i, p in enumerate(parents) if p is not None and p >= 0]
    return _assemble(name, [str(i) for i in range(n)], measure or [1.0] * n, edges)


def gen_binary_tree(depth: int) -> MeasuredNetwork:
    if depth < 1:
        raise ValueError("binary tree depth must be >= 1")
    n = 2 ** (depth + 1) - 1
    return gen_tree([None] + [(i - 1) // 2 for i in range(1, n)], name=f"binary-tree-{depth}")


# ---------------------------------------------------------------------------
# ガスケット
# ---------------------------------------------------------------------------


def _corners(origin: Point, side: Fraction) -> tuple[Point, Point, Point]:
    ox, oy = origin
    return (origin, (ox + side, oy), (ox, oy + side))


def _gasket_from_cells(name: str, cells: Sequence[tuple[Point, Fraction, Fraction]]) -> MeasuredNetwork:
    """
    最下層のセル（原点, 一辺, 質量）から回路網を作る。
    各セルの質量を3頂点に等分し、共有頂点では足し合わせる。頂点は (y, x) の辞書順。
    """
    mass: dict[Point, Fraction] = {}
    sides: list[tuple[Point, Point]] = []
    for origin, side, cell_mass in cells:
        a, b, c = _corners(origin, side)
        for p in (a, b, c):
            mass[p] = mass.get(p, Fraction(0)) + cell_mass / 3
        sides.extend(((a, b), (b, c), (a, c)))
    order = sorted(mass, key=lambda p: (p[1], p[0]))
    index = {p: i for i, p in enumerate(order)}
    edges = sorted({tuple(sorted((index[p], index[q]))) for p, q in sides})
    return _assemble(name, [str(i) for i in range(len(order))], [float(mass[p]) for p in order], edges)


def _subdivide(origin: Point, side: Fraction, pattern) -> list[tuple[Point, Fraction]]:
    out = []
    for (i, j), k in pattern:
        child = side / k
        out.append(((origin[0] + i * child, origin[1] + j * child), child))
    return out


def gasket_corners(net: MeasuredNetwork) -> tuple[int, int, int]:
    """外側の3頂点（(0,0), (1,0), (0,1)）のインデックス。"""
    return 0, _last_on_bottom_row(net), net.n - 1


def _last_on_bottom_row(net: MeasuredNetwork) -> int:
    # (y, x) 順なので、y=0 の行の最後が (1, 0)
    deg = np.asarray(net.adjacency.sum(axis=1)).ravel()
    corners = np.flatnonzero(deg == 2)
    return int(sorted(corners)[1])


def _recursive_cells(level: int, choose) -> list[tuple[Point, Fraction, Fraction]]:
    cells: list[tuple[Point, Fraction, Fraction]] = []

    def walk(origin: Point, side: Fraction, cell_mass: Fraction, depth: int) -> None:
        if depth == level:
            cells.append((origin, side, cell_mass))
            return
        children = _subdivide(origin, side, choose())
        for child_origin, child_side in children:
            walk(child_origin, child_side, cell_mass / len(children), depth + 1)

    walk((Fraction(0), Fraction(0)), Fraction(1), Fraction(1), 0)
    return cells


def gen_sierpinski(level: int) -> MeasuredNetwork:
    if not 0 <= level <= MAX_GASKET_LEVEL:
        raise ValueError(f"gasket level must lie in [0, {MAX_GASKET_LEVEL}]")
    cells = _recursive_cells(level, lambda: SG2_PATTERN)
    return _gasket_from_cells(f"sierpinski-{level}", cells)


def gen_random_recursive_gasket(level: int, weights: Sequence[float], seed: int) -> MeasuredNetwork:
    """
    セルごとに SG2（1/2 に3分割）か SG3（1/3 の上向き6分割）を重みに従って選ぶ。
    葉でないセルごとに rng.random() を1回、深さ優先の順で引く。子の質量は親の 1/3 または 1/6。
    """
    w = np.asarray(weights, dtype=float)
    if w.size != len(PATTERNS) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError(f"need {len(PATTERNS)} non-negative pattern weights")
    if not 0 <= level <= MAX_GASKET_LEVEL:
        raise ValueError(f"gasket level must lie in [0, {MAX_GASKET_LEVEL}]")
    cumulative = np.cumsum(w) / w.sum()
    rng = seeded_rng(seed)

    def choose():
        u = rng.random()
        k = int(np.searchsorted(cumulative, u, side="right"))
        return PATTERNS[min(k, len(PATTERNS) - 1)]

    cells = _recursive_cells(level, choose)
    net = _gasket_from_cells(f"random-gasket-{level}-s{seed}", cells)
    logger.debug("random gasket level %d seed %d: %d vertices", level, seed, net.n)
    return net


# ---------------------------------------------------------------------------
# 樹状体
# ---------------------------------------------------------------------------


def default_offspring_law(max_children: int = 10) -> list[float]:
    """臨界幾何分布 p_k = 2^{-(k+1)}（k <= max_children で打ち切って正規化）。"""
    p = np.array([2.0 ** -(k + 1) for k in range(max_children + 1)])
    return list(p / p.sum())


def gen_dendrite(size: int, law: Optional[Sequence[float]] = None, seed: int = 0) -> MeasuredNetwork:
    """
    Galton–Watson 木を幅優先で size 頂点まで育てる。途中で絶滅したら同じ乱数列のまま最初からやり直す。
    子の数は rng.random() 1回を累積分布で引く。
    """
    if size < 2:
        raise ValueError("dendrite needs at least 2 vertices")
    probs = np.asarray(law if law is not None else default_offspring_law(), dtype=float)
    if np.any(probs < 0) or probs.sum() <= 0 or probs[1:].sum() <= 0:
        raise ValueError("offspring law must give positive mass to some k >= 1")
    cumulative = np.cumsum(probs) / probs.sum()
    rng = seeded_rng(seed)

    for attempt in range(MAX_DENDRITE_ATTEMPTS):
        parents: list[Optional[int]] = [None]
        queue = deque([0])
        while queue and len(parents) < size:
            v = queue.popleft()
            k = int(np.searchsorted(cumulative, rng.random(), side="right"))
            for _ in range(min(k, size - len(parents))):
                parents.append(v)
                queue.append(len(parents) - 1)
        if len(parents) == size:
            logger.debug("GW dendrite size %d grown after %d restarts", size, attempt)
            return gen_tree(parents, name=f"dendrite-{size}-s{seed}")
    raise ValueError(f"offspring law went extinct {MAX_DENDRITE_ATTEMPTS} times before reaching {size} vertices")


def _vicsek_cells(level: int) -> list[tuple[tuple[int, int], list[int]]]:
    """
    Vicsek 木の最下層の X 字セル（中心座標, 各階層で中央=0/角=1..4 の経路）。
    """
    cells: list[tuple[tuple[int, int], list[int]]] = []

    def walk(cx: int, cy: int, half: int, path: list[int]) -> None:
        if half == 1:
            cells.append(((cx, cy), path))
            return
        step = 2 * (half // 3)
        walk(cx, cy, half // 3, path + [0])
        for k, (dx, dy) in enumerate(((1, 1), (-1, 1), (-1, -1), (1, -1)), start=1):
            walk(cx + dx * step, cy + dy * step, half // 3, path + [k])

    walk(0, 0, 3**level, [])
    return cells


def _vicsek_network(name: str, level: int, weight_of) -> MeasuredNetwork:
    cells = _vicsek_cells(level)
    weight: dict[tuple[int, int], float] = {}
    pairs: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    for (cx, cy), path in cells:
        pts = [(cx, cy)] + [(cx + dx, cy + dy) for dx, dy in ((1, 1), (-1, 1), (-1, -1), (1, -1))]
        for p in pts:
            weight.setdefault(p, weight_of(path))
        for p in pts[1:]:
            pairs.add((pts[0], p))
    order = sorted(weight, key=lambda p: (p[1], p[0]))
    index = {p: i for i, p in enumerate(order)}
    edges = sorted(tuple(sorted((index[a], index[b]))) for a, b in pairs)
    return _assemble(name, [str(i) for i in range(len(order))], [weight[p] for p in order], edges)


def gen_vicsek(level: int) -> MeasuredNetwork:
    """Vicsek 木（X 字を5つ組み合わせる自己相似な樹状体）。単位質量・単位コンダクタンス。"""
    if not 0 <= level <= 4:
        raise ValueError("vicsek level must lie in [0, 4]")
    return _vicsek_network(f"vicsek-{level}", level, lambda path: 1.0)


def gen_two_weighted_tree(depth: int, weights: Sequence[float] = (4.0, 0.25)) -> MeasuredNetwork:
    """
    Vicsek 木に多重スケールの2値質量を載せる。階層 k（粗い方から 1, 2, ...）で
    中央の部分木なら w1^{1/k}、角の部分木なら w2^{1/k} を掛ける。
    """
    if not 1 <= depth <= 4:
        raise ValueError("two-weighted tree depth must lie in [1, 4]")
    w1, w2 = (float(w) for w in weights)
    if w1 <= 0 or w2 <= 0:
        raise ValueError("weights must be positive")

    def weight_of(path: list[int]) -> float:
        value = 1.0
        for k, branch in enumerate(path, start=1):
            value *= (w1 if branch == 0 else w2) ** (1.0 / k)
        return value

    return _vicsek_network(f"two-weighted-tree-{depth}", depth, weight_of)


def generate(spec: "GeneratorSpec", seed: Optional[int] = None) -> MeasuredNetwork:
    """
    GeneratorSpec から回路網を作る。seed は spec.seed が無いときだけ使う。
    """
    family = spec.family
    rng_seed = spec.seed if spec.seed is not None else (seed if seed is not None else 0)
    if family == "path":
        return gen_path(spec.n)
    if family == "star":
        return gen_star(spec.k)
    if family == "binary_tree":
        return gen_binary_tree(spec.depth)
    if family == "tree":
        return gen_tree(spec.parents)
    if family == "sierpinski":
        return gen_sierpinski(spec.level)
    if family == "random_recursive_gasket":
        return gen_random_recursive_gasket(spec.level, spec.weights, rng_seed)
    if family == "gw_dendrite":
        return gen_dendrite(spec.size, spec.law, rng_seed)
    if family == "vicsek":
        return gen_vicsek(spec.level)
    if family == "two_weighted_tree":
        return gen_two_weighted_tree(spec.depth, spec.weights or (4.0, 0.25))
    raise ValueError(f"unknown generator family: {family}")
