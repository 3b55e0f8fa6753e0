from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.integrate import quad

from .exceptions import NoComplementError, NumericalInvariantError, OutsideBallError
from .network import MeasuredNetwork, dirichlet_energy, solve_grounded
from .resistance import ResistanceBall, ResistanceMetric, escape_resistance, resistance_ball

logger = logging.getLogger(__name__)

BallLike = ResistanceBall | Iterable[int]


def _members(net: MeasuredNetwork, ball: BallLike) -> np.ndarray:
    raw = ball.members if isinstance(ball, ResistanceBall) else ball
    members = np.unique(np.asarray(list(raw), dtype=np.int64))
    if members.size == 0:
        raise ValueError("killing set must be non-empty")
    if members.min() < 0 or members.max() >= net.n:
        raise ValueError("killing set vertex out of range")
    if members.size == net.n:
        raise NoComplementError("killing set covers the whole network")
    return members


def _position(members: np.ndarray, x: int) -> int:
    pos = int(np.searchsorted(members, x))
    if pos >= members.size or members[pos] != x:
        raise OutsideBallError(f"start vertex {x} is not in the ball")
    return pos


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """
    球 B で殺した過程の Green 核 g_B(x, y)（行列の添字は members の順）。
    E^x ∫_0^{T_B} f(X_s) ds = Σ_y g_B(x, y) f(y) μ(y)。
    """

    network: MeasuredNetwork
    members: np.ndarray
    matrix: np.ndarray

    def __call__(self, x: int, y: int) -> float:
        return float(self.matrix[_position(self.members, x), _position(self.members, y)])

    def row(self, x: int) -> np.ndarray:
        """g_B(x, .) を全頂点に 0 拡張したもの。"""
        full = np.zeros(self.network.n)
        full[self.members] = self.matrix[_position(self.members, x)]
        return full

    def occupation_mass(self) -> np.ndarray:
        """Σ_y g_B(x, y) μ(y)（members の順）。"""
        return self.matrix @ self.network.measure[self.members]


def green_kernel(net: MeasuredNetwork, ball: BallLike, check: bool = True) -> GreenKernel:
    """
    g_B = K_BB^{-1}（K は D - C を B に制限した Dirichlet ラプラシアン）。
    check=True で対称・非負・g(x,y) <= g(x,x)・E(g(x,.)) = g(x,x)・中心の g(x,x) = R(x, B^c) を確かめる。
    """
    members = _members(net, ball)
    block = net.laplacian[np.ix_(members, members)]
    factor = scipy.linalg.cho_factor(block, lower=True, check_finite=False)
    g = scipy.linalg.cho_solve(factor, np.eye(members.size), check_finite=False)
    g = 0.5 * (g + g.T)
    kernel = GreenKernel(network=net, members=members, matrix=g)
    if check:
        _check_green(net, kernel, ball)
    return kernel


def _check_green(net: MeasuredNetwork, kernel: GreenKernel, ball: BallLike) -> None:
    g = kernel.matrix
    diag = np.diag(g)
    tol = 1e-9 * max(1.0, float(diag.max()))
    if np.any(g < -tol):
        raise NumericalInvariantError("Green kernel has negative entries")
    if np.any(g > diag[:, None] + tol):
        raise NumericalInvariantError("Green kernel exceeds its diagonal")
    for i, x in enumerate(kernel.members):
        energy = dirichlet_energy(net, kernel.row(int(x)))
        if abs(energy - diag[i]) > 1e-9 * max(1.0, diag[i]):
            raise NumericalInvariantError(f"E(g(x,.)) = {energy:.12g} differs from g(x,x) = {diag[i]:.12g}")
    if isinstance(ball, ResistanceBall):
        escape = escape_resistance(net, ball)
        gxx = diag[_position(kernel.members, ball.center)]
        if abs(gxx - escape) > 1e-9 * max(1.0, escape):
            raise NumericalInvariantError(f"g(x,x) = {gxx:.12g} differs from escape resistance {escape:.12g}")


def expected_exit_time(net: MeasuredNetwork, ball: BallLike, x: int) -> float:
    """
    E^x T_B を Green 核の質量積分と Poisson 方程式（K u = μ on B, u = 0 outside）の両方で求め、一致を確かめる。
    """
    members = _members(net, ball)
    pos = _position(members, x)
    kernel = green_kernel(net, members, check=False)
    via_green = float(kernel.occupation_mass()[pos])

    outside = np.setdiff1d(np.arange(net.n), members)
    via_poisson = float(solve_grounded(net, {int(y): 0.0 for y in outside}, source=np.ones(net.n))[x])
    if abs(via_green - via_poisson) > 1e-9 * max(1.0, abs(via_poisson)):
        raise NumericalInvariantError(f"exit time routes disagree ({via_green:.12g} vs {via_poisson:.12g})")
    return via_poisson


@dataclass(frozen=True, eq=False)
class KilledSpectrum:
    """
    殺された生成作用素 -L_B の固有分解（M_B^{-1/2} K_BB M_B^{-1/2} = U diag(w) U^T）。
    """

    network: MeasuredNetwork
    members: np.ndarray
    rates: np.ndarray
    vectors: np.ndarray

    def survival(self, x: int, times: np.ndarray | float) -> np.ndarray | float:
        """P^x(T_B > t) = (e^{t L_B} 1)(x)。"""
        pos = _position(self.members, x)
        t = np.asarray(times, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be non-negative")
        sqrt_mu = np.sqrt(self.network.measure[self.members])
        coeffs = self.vectors[pos] / sqrt_mu[pos] * (self.vectors.T @ sqrt_mu)
        values = np.exp(-np.multiply.outer(t, self.rates)) @ coeffs
        values = np.clip(values, 0.0, 1.0)
        return float(values) if np.ndim(values) == 0 else values

    def mean(self, x: int) -> float:
        pos = _position(self.members, x)
        sqrt_mu = np.sqrt(self.network.measure[self.members])
        coeffs = self.vectors[pos] / sqrt_mu[pos] * (self.vectors.T @ sqrt_mu)
        return float(np.sum(coeffs / self.rates))


def killed_spectrum(net: MeasuredNetwork, ball: BallLike) -> KilledSpectrum:
    members = _members(net, ball)
    s = 1.0 / np.sqrt(net.measure[members])
    block = s[:, None] * net.laplacian[np.ix_(members, members)] * s[None, :]
    rates, vectors = scipy.linalg.eigh(block, check_finite=False)
    if rates[0] <= 0:
        raise NumericalInvariantError("killed generator is not positive definite")
    return KilledSpectrum(network=net, members=members, rates=rates, vectors=vectors)


def exit_tail(net: MeasuredNetwork, ball: BallLike, x: int, t: float | np.ndarray) -> float | np.ndarray:
    """
    P^x(T_B <= t) = 1 - (e^{t L_B} 1)(x)。t について非減少で [0, 1] に収まる。
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("time must be positive")
    spectrum = killed_spectrum(net, ball)
    tail = 1.0 - np.asarray(spectrum.survival(x, t_arr))
    tail = np.clip(tail, 0.0, 1.0)
    return float(tail) if np.ndim(tail) == 0 else tail


def mean_exit_time_from_tail(spectrum: KilledSpectrum, x: int) -> float:
    """
    ∫_0^∞ P^x(T_B > t) dt を log t 上の適応求積で求める（Green 核の経路とは独立）。
    """
    fast, slow = float(spectrum.rates.max()), float(spectrum.rates.min())
    t_lo, t_hi = 1e-10 / fast, 60.0 / slow
    integrand = lambda s: float(spectrum.survival(x, math.exp(s))) * math.exp(s)  # noqa: E731
    value, _ = quad(integrand, math.log(t_lo), math.log(t_hi), limit=400, epsrel=1e-9, epsabs=0.0)
    # [0, t_lo] では生存確率はほぼ 1
    return value + t_lo


def exit_table(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    centers: Sequence[int],
    radii: Sequence[float],
    times: Sequence[float],
) -> pd.DataFrame:
    """
    (center, r, x=center, E, t, tail) の縦長テーブル。補集合が空になる球は飛ばす。
    """
    rows: list[dict[str, Any]] = []
    for c in centers:
        for r in radii:
            ball = resistance_ball(metric, c, r)
            if len(ball.members) == net.n:
                continue
            mean = expected_exit_time(net, ball, c)
            tails = np.atleast_1d(exit_tail(net, ball, c, np.asarray(times, dtype=float)))
            for t, p in zip(times, tails):
                rows.append({"center": net.ids[c], "r": float(r), "x": net.ids[c], "E": mean, "t": float(t), "tail": float(p)})
    return pd.DataFrame(rows, columns=["center", "r", "x", "E", "t", "tail"])
