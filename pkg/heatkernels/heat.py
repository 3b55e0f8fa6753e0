from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from . import conf
from .exceptions import DenseLimitError, KernelEnergyViolation, NumericalInvariantError
from .network import MeasuredNetwork, VertexFunction, dirichlet_energy
from .resistance import ResistanceMetric
from .volume import FluctuationModel, ScaleFunctions, VolumeProfile, eval_scale

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """
    生成作用素の固有分解。φ_k は μ 重み付き内積で正規直交（eigenfunctions[:, k] = φ_k）。
    """

    network: MeasuredNetwork
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def measure(self) -> np.ndarray:
        return self.network.measure

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues[1]) if self.eigenvalues.size > 1 else float("inf")

    def to_dict(self) -> dict[str, Any]:
        return {"network": self.network.name, "eigenvalues": [float(v) for v in self.eigenvalues]}


def _check_time(t: float, allow_zero: bool = False) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0 or (t == 0 and not allow_zero):
        raise ValueError(f"time must be {'non-negative' if allow_zero else 'positive'}: {t}")
    return t


def spectral_decompose(net: MeasuredNetwork, limit: Optional[int] = None) -> SpectralDecomposition:
    """
    M^{-1/2} K M^{-1/2} を密に固有分解し、φ = M^{-1/2} U とする。
    上限を超える頂点数は打ち切らずに DenseLimitError。
    """
    limit = int(limit or conf.get("DENSE_SPECTRAL_LIMIT"))
    if net.n > limit:
        raise DenseLimitError(f"{net.n} vertices exceed the dense spectral limit {limit}")

    s = 1.0 / np.sqrt(net.measure)
    sym = s[:, None] * net.laplacian * s[None, :]
    lam, vec = scipy.linalg.eigh(sym, check_finite=False)
    scale = max(1.0, float(np.abs(lam).max()))
    if lam[0] < -1e-9 * scale:
        raise NumericalInvariantError(f"negative eigenvalue {lam[0]:.3e} of the generator")
    lam = np.maximum(lam, 0.0)
    lam[0] = 0.0
    phi = s[:, None] * vec
    # 定数固有関数の符号をそろえる
    if phi[0, 0] < 0:
        phi[:, 0] = -phi[:, 0]

    residual = (net.laplacian @ phi) / net.measure[:, None] - phi * lam[None, :]
    worst = float(np.abs(residual).max()) if residual.size else 0.0
    if worst > 1e-9 * scale:
        raise NumericalInvariantError(f"eigenpair residual {worst:.3e} above tolerance")

    phi.setflags(write=False)
    lam.setflags(write=False)
    logger.debug("spectral decomposition %s: n=%d gap=%.4g", net.name, net.n, lam[1] if lam.size > 1 else 0.0)
    return SpectralDecomposition(network=net, eigenvalues=lam, eigenfunctions=phi)


def heat_kernel(dec: SpectralDecomposition, t: float, x: int | np.ndarray, y: int | np.ndarray) -> float | np.ndarray:
    """
    p_t(x, y) = Σ_k e^{-λ_k t} φ_k(x) φ_k(y)（μ に関する推移密度）。x, y は配列でもよい。
    """
    t = _check_time(t)
    weights = np.exp(-dec.eigenvalues * t)
    phi = dec.eigenfunctions
    value = np.einsum("...k,k,...k->...", phi[x], weights, phi[y])
    return float(value) if np.ndim(value) == 0 else value


def kernel_matrix(dec: SpectralDecomposition, t: float) -> np.ndarray:
    t = _check_time(t)
    phi = dec.eigenfunctions
    p = (phi * np.exp(-dec.eigenvalues * t)) @ phi.T
    return 0.5 * (p + p.T)


def kernel_diagonal(dec: SpectralDecomposition, ts: Iterable[float]) -> np.ndarray:
    """
    p_t(x, x) を (len(ts), n) で返す。
    """
    ts = np.atleast_1d(np.asarray(list(ts) if not isinstance(ts, np.ndarray) else ts, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("time must be positive")
    return np.exp(-np.outer(ts, dec.eigenvalues)) @ (dec.eigenfunctions**2).T


def heat_trace(dec: SpectralDecomposition, t: float) -> float:
    """Σ_x p_t(x,x) μ(x) = Σ_k e^{-λ_k t}"""
    t = _check_time(t)
    return float(np.exp(-dec.eigenvalues * t).sum())


def semigroup_apply(dec: SpectralDecomposition, t: float, f: VertexFunction) -> VertexFunction:
    t = _check_time(t, allow_zero=True)
    f = np.asarray(f, dtype=float)
    if f.shape != (dec.n,):
        raise ValueError(f"vertex function must have length {dec.n}")
    if t == 0:
        return f.copy()
    phi = dec.eigenfunctions
    coeffs = phi.T @ (dec.measure * f)
    return phi @ (np.exp(-dec.eigenvalues * t) * coeffs)


def weighted_norm(dec: SpectralDecomposition, f: VertexFunction, p: int = 2) -> float:
    f = np.asarray(f, dtype=float)
    if p == 1:
        return float(np.sum(np.abs(f) * dec.measure))
    return float(np.sqrt(np.sum(f * f * dec.measure)))


def time_window(scale: ScaleFunctions) -> tuple[float, float]:
    """
    h^{-1}(t) ∈ [r_min, r_max / 2] となる t の範囲。窓が潰れる場合は (t_lo, t_lo)。
    """
    model = scale.model
    t_lo = float(scale.h(model.r_min))
    t_hi = float(scale.h(model.r_max / 2.0))
    return t_lo, max(t_lo, t_hi)


def time_grid(scale: ScaleFunctions, points: Optional[int] = None) -> np.ndarray:
    points = int(points or conf.get("T_GRID_POINTS"))
    t_lo, t_hi = time_window(scale)
    if t_hi <= t_lo:
        return np.array([t_lo])
    return np.geomspace(t_lo, t_hi, points)


@dataclass(frozen=True)
class UltracontractivityReport:
    times: np.ndarray
    gamma: np.ndarray
    ratio: np.ndarray

    @property
    def constant(self) -> float:
        return float(self.ratio.max())

    @property
    def variation(self) -> float:
        return float(self.ratio.max() / self.ratio.min())

    def as_dict(self) -> dict[str, Any]:
        return {
            "times": [float(t) for t in self.times],
            "gamma": [float(g) for g in self.gamma],
            "ratio": [float(r) for r in self.ratio],
            "constant": self.constant,
            "variation": self.variation,
        }


def ultracontractivity_profile(
    dec: SpectralDecomposition,
    model: FluctuationModel,
    times: Optional[np.ndarray] = None,
    scale: Optional[ScaleFunctions] = None,
) -> UltracontractivityReport:
    """
    γ(t) = sup_{‖f‖_1 = 1} ‖P_t f‖_2 を質量点 δ_x / μ(x) で評価し、
    γ(t)^2 t / h_l^{-1}(t) を窓内で並べる。
    有限空間では γ(t)^2 = max_x p_{2t}(x, x) なので、それと突き合わせる。
    """
    scale = scale or eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    gamma = np.empty(times.size)
    for k, t in enumerate(times):
        p = kernel_matrix(dec, t)
        # P_t(δ_x / μ(x)) = p_t(., x)
        norms = np.sqrt((p * p * dec.measure[None, :]).sum(axis=1))
        gamma[k] = norms.max()
    dual = np.sqrt(kernel_diagonal(dec, 2.0 * times).max(axis=1))
    if not np.allclose(gamma, dual, rtol=1e-8, atol=0.0):
        raise NumericalInvariantError("‖P_t‖_{1→2} disagrees with max_x p_2t(x,x)^(1/2)")
    ratio = gamma**2 * times / scale.h_l_inv(times)
    logger.debug("ultracontractivity ratio range [%.4g, %.4g]", ratio.min(), ratio.max())
    return UltracontractivityReport(times=times, gamma=gamma, ratio=ratio)


@dataclass(frozen=True)
class KernelEnergyReport:
    t: float
    x: int
    energy: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.energy / self.bound if self.bound > 0 else 0.0

    def as_dict(self) -> dict[str, Any]:
        return {"t": self.t, "x": self.x, "energy": self.energy, "bound": self.bound, "ratio": self.ratio}


def kernel_energy_check(dec: SpectralDecomposition, t: float, x: int) -> KernelEnergyReport:
    """
    E(p_t(x,.), p_t(x,.)) <= p_t(x,x) / t。破れたらソルバの不具合として KernelEnergyViolation。
    """
    t = _check_time(t)
    row = kernel_matrix(dec, t)[x]
    energy = dirichlet_energy(dec.network, row)
    weights = np.exp(-dec.eigenvalues * t)
    spectral_energy = float(np.sum(dec.eigenvalues * weights**2 * dec.eigenfunctions[x] ** 2))
    if not np.isclose(energy, spectral_energy, rtol=1e-8, atol=1e-12):
        raise NumericalInvariantError(f"kernel energy mismatch ({energy:.6e} vs {spectral_energy:.6e})")
    bound = float(heat_kernel(dec, t, x, x)) / t
    if energy > bound + 1e-10 * max(1.0, bound):
        raise KernelEnergyViolation(f"E(p_t(x,.)) = {energy:.6e} > p_t(x,x)/t = {bound:.6e} at t={t}, x={x}")
    return KernelEnergyReport(t=t, x=int(x), energy=energy, bound=bound)


@dataclass(frozen=True)
class DiagonalVolumeCheck:
    pairs: int
    worst_ratio: float
    witness: dict[str, float]

    @property
    def holds(self) -> bool:
        return self.worst_ratio <= 1.0 + 1e-9

    def as_dict(self) -> dict[str, Any]:
        return {"pairs": self.pairs, "worst_ratio": self.worst_ratio, "holds": self.holds, "witness": dict(self.witness)}


def diagonal_volume_check(dec: SpectralDecomposition, profile: VolumeProfile) -> DiagonalVolumeCheck:
    """
    p_{2 r V(x,r)}(x, x) <= 2 / V(x, r) を (x, r) の全グリッドで確かめる（比 p V / 2 の最大値）。
    """
    worst, witness = 0.0, {}
    for k, r in enumerate(profile.radii):
        volumes = profile.volumes[:, k]
        times = 2.0 * r * volumes
        diag = np.einsum("xk,xk->x", dec.eigenfunctions**2, np.exp(-np.outer(times, dec.eigenvalues)))
        ratios = diag * volumes / 2.0
        j = int(np.argmax(ratios))
        if ratios[j] > worst:
            worst, witness = float(ratios[j]), {"x": float(j), "r": float(r)}
    return DiagonalVolumeCheck(pairs=int(profile.volumes.size), worst_ratio=worst, witness=witness)


def continuity_check(
    dec: SpectralDecomposition,
    metric: ResistanceMetric,
    triples: Sequence[tuple[int, int, float]],
) -> float:
    """
    |p_t(x,x) - p_t(x,y)|^2 <= R(x,y) p_t(x,x) / t の比の最大値を返す（1 以下であるべき）。
    """
    worst = 0.0
    for x, y, t in triples:
        pxx = heat_kernel(dec, t, x, x)
        pxy = heat_kernel(dec, t, x, y)
        rhs = metric(x, y) * pxx / t
        if rhs > 0:
            worst = max(worst, (pxx - pxy) ** 2 / rhs)
    if worst > 1.0 + 1e-8:
        raise NumericalInvariantError(f"kernel modulus of continuity exceeded (ratio {worst:.6f})")
    return worst


def kernel_samples_frame(dec: SpectralDecomposition, times: Iterable[float], pairs: Iterable[tuple[int, int]]) -> pd.DataFrame:
    pairs = list(pairs)
    rows = []
    ids = dec.network.ids
    for t in times:
        for x, y in pairs:
            rows.append({"t": float(t), "x": ids[x], "y": ids[y], "p": heat_kernel(dec, t, x, y)})
    return pd.DataFrame(rows, columns=["t", "x", "y", "p"])
