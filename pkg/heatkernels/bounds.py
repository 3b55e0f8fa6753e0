from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Optional, Sequence

import numpy as np
import pandas as pd

from . import conf
from .exceptions import HypothesesNotMetError, InfeasibleExponentsError, WindowTooSmallError
from .exits import expected_exit_time, killed_spectrum
from .heat import SpectralDecomposition, kernel_diagonal, time_grid, time_window
from .network import MeasuredNetwork
from .resistance import ChainingReport, ResistanceMetric, chaining_probe, escape_resistance, resistance_ball
from .volume import (
    EnvelopeFit,
    FluctuationModel,
    ScaleFunctions,
    VolumeProfile,
    eval_scale,
    fit_envelopes,
    monotone_inverse,
)

logger = logging.getLogger(__name__)

Mode = Literal["ondiag", "offdiag"]
Policy = Literal["margin", "closed-form"]

HOLDS = "holds"
VIOLATED = "violated"
SKIPPED = "skipped"


# ---------------------------------------------------------------------------
# 指数
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentSet:
    beta_u: float
    beta_l: float
    b: float
    eps: float
    mode: str
    policy: str
    gamma1: float
    gamma2: float
    theta1: float
    theta2: Optional[float]
    theta3: float
    theta1_lower: float
    theta1_upper: float
    theta2_lower: Optional[float]

    @property
    def theta2_exceeds_theta1(self) -> bool:
        return self.theta2 is not None and self.theta2 > self.theta1

    def as_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "policy": self.policy,
            "beta_u": self.beta_u,
            "beta_l": self.beta_l,
            "b": self.b,
            "eps": self.eps,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "theta3": self.theta3,
            "theta1_window": [self.theta1_lower, self.theta1_upper],
            "theta2_lower": self.theta2_lower,
            "theta2_exceeds_theta1": self.theta2_exceeds_theta1,
        }


def _positive_ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.inf


def derive_exponents(
    model: FluctuationModel,
    mode: Mode = "ondiag",
    slack: Optional[float] = None,
    policy: Policy = "margin",
) -> ExponentSet:
    """
    (b, ε) の条件を確かめて γ1, γ2, θ1, θ2, θ3 を決める。

    - margin: θ1, θ2 を各下限の (1 + slack) 倍にする
    - closed-form: θ1 = 4(2+β_u)^2, θ2 = θ1(2+β_u)/(β_l - 2bθ1)（同じ窓で検査する）
    """
    slack = float(conf.get("EXPONENT_SLACK") if slack is None else slack)
    if mode not in ("ondiag", "offdiag"):
        raise ValueError(f"unknown exponent mode: {mode}")
    if policy not in ("margin", "closed-form"):
        raise ValueError(f"unknown exponent policy: {policy}")
    bu, bl, b, eps = model.beta_u, model.beta_l, model.b, model.eps

    if mode == "ondiag":
        cap = 1.0 / (4.0 * (2.0 + bu))
        if not (b < cap and eps < cap):
            raise InfeasibleExponentsError("b, eps < 1/(4(2+beta_u))", f"b={b:.4g}, eps={eps:.4g}, cap={cap:.4g}")
    else:
        cap = bl / (8.0 * (2.0 + bu) ** 2)
        if not (b < cap and eps < cap):
            raise InfeasibleExponentsError("b, eps < beta_l/(8(2+beta_u)^2)", f"b={b:.4g}, eps={eps:.4g}, cap={cap:.4g}")

    gamma1 = 3.0 + 2.0 * b + 2.0 * bu
    denom = 1.0 - 2.0 * b * gamma1
    if denom <= 0:
        raise InfeasibleExponentsError("1 - 2b(3+2b+2beta_u) > 0", f"b={b:.4g}")
    theta1_lower = gamma1 * (2.0 + bu) / denom
    theta1_upper = min(_positive_ratio(bl, 2.0 * b), _positive_ratio(bl, 2.0 * eps)) if mode == "offdiag" else math.inf

    if policy == "closed-form":
        theta1 = 4.0 * (2.0 + bu) ** 2
    else:
        theta1 = theta1_lower * (1.0 + slack)
        if theta1 >= theta1_upper:
            theta1 = 0.5 * (theta1_lower + theta1_upper)
            logger.warning("theta1 margin exceeds the window; using the midpoint %.6g", theta1)
    if not theta1_lower < theta1 < theta1_upper:
        raise InfeasibleExponentsError(
            "beta_l/(2b) ∧ beta_l/(2eps) > theta1 > (3+2b+2beta_u)(2+beta_u)/(1-2b(3+2b+2beta_u))",
            f"theta1={theta1:.6g}, window=({theta1_lower:.6g}, {theta1_upper:.6g})",
        )

    gap = bl - 2.0 * b * theta1
    theta2_lower: Optional[float] = theta1 * (1.0 + bl) / gap if gap > 0 else None
    theta2: Optional[float] = None
    if theta2_lower is not None:
        theta2 = theta1 * (2.0 + bu) / gap if policy == "closed-form" else theta2_lower * (1.0 + slack)
        if not theta2 > theta2_lower:
            raise InfeasibleExponentsError("theta2 > theta1(1+beta_l)/(beta_l-2b theta1)", f"theta2={theta2:.6g}")
    elif mode == "offdiag":
        raise InfeasibleExponentsError("beta_l - 2b theta1 > 0", f"theta1={theta1:.6g}")

    exps = ExponentSet(
        beta_u=bu,
        beta_l=bl,
        b=b,
        eps=eps,
        mode=mode,
        policy=policy,
        gamma1=gamma1,
        gamma2=(theta1 - 2.0 * gamma1) / (bu + 4.0 * b * gamma1),
        theta1=theta1,
        theta2=theta2,
        theta3=gamma1 * (1.0 + 2.0 / bl),
        theta1_lower=theta1_lower,
        theta1_upper=theta1_upper,
        theta2_lower=theta2_lower,
    )
    logger.info("exponents (%s, %s): theta1=%.6g theta2=%s theta3=%.6g", mode, policy, exps.theta1, exps.theta2, exps.theta3)
    return exps


def predicted_exponents(model: FluctuationModel, exps: ExponentSet) -> dict[str, float]:
    """
    族ごとの閉形式の減衰指数（t の冪、対数族は log(1/t) の冪も）。
    """
    a = model.alpha
    out = {"ondiag_power": -a / (a + 1.0)}
    if model.family == "polynomial":
        d = model.delta
        out["ondiag_lower_power"] = -(a - 2.0 * d * exps.theta1) / (a + 1.0)
        out["ondiag_upper_power"] = -(a + d) / (a + 1.0)
    elif model.family == "logarithmic":
        a0 = model.a1 + model.a2
        out["inf_lower_log_power"] = -(a * (2 * a + 3) * (a + 2) * a0 + model.a2) / (a + 1.0)
        out["inf_upper_log_power"] = -model.a2 / (a + 1.0)
        out["sup_log_power"] = -model.a1 / (a + 1.0)
    return out


# ---------------------------------------------------------------------------
# 証明書
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCertificate:
    """
    1つの評価式に対する検査結果。定数は格子上の比の極値（下界は最小、上界は最大）。
    """

    bound_id: str
    grid: dict[str, Any]
    constants: dict[str, float]
    ratio_min: float
    ratio_max: float
    verdict: str
    witnesses: tuple[dict[str, Any], ...] = ()
    metrics: dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def as_dict(self) -> dict[str, Any]:
        return {
            "bound_id": self.bound_id,
            "grid": self.grid,
            "constants": self.constants,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "verdict": self.verdict,
            "witnesses": list(self.witnesses),
            "metrics": self.metrics,
        }


def _finite_positive(value: float) -> bool:
    return bool(np.isfinite(value) and value > 0)


def grid_vertices(n: int, count: Optional[int] = None, include: Optional[int] = None) -> np.ndarray:
    """等間隔インデックスの頂点（include を必ず含む）。"""
    count = int(count or conf.get("CERT_CENTERS"))
    picks = set(int(i) for i in np.linspace(0, n - 1, min(count, n)).round().astype(np.int64))
    if include is not None:
        picks.add(int(include))
    return np.array(sorted(picks), dtype=np.int64)


def attained_radii(metric: ResistanceMetric, lo: float, hi: float, count: Optional[int] = None) -> np.ndarray:
    """[lo, hi] 内の実現抵抗値から対数等間隔に count 個まで選ぶ。"""
    count = int(count or conf.get("CERT_RADII"))
    vals = metric.distinct_values
    vals = vals[(vals >= lo) & (vals <= hi)]
    if vals.size <= count:
        return vals
    idx = np.unique(np.searchsorted(vals, np.geomspace(vals[0], vals[-1], count)).clip(0, vals.size - 1))
    return vals[idx]


def _window_description(scale: ScaleFunctions, times: np.ndarray) -> dict[str, Any]:
    model = scale.model
    return {
        "r_window": [model.r_min, model.r_max],
        "t_window": list(time_window(scale)),
        "t_points": int(times.size),
        "rule": "h^-1(t) in [r_min, r_max/2]",
    }


def _lowest_decade(times: np.ndarray) -> np.ndarray:
    return times <= times[0] * 10.0


def _middle_decade(times: np.ndarray) -> np.ndarray:
    lo, hi = times[0], times[-1]
    mid = math.sqrt(lo * hi)
    half = min(math.sqrt(10.0), math.sqrt(hi / lo))
    return (times >= mid / half * (1 - 1e-12)) & (times <= mid * half * (1 + 1e-12))


def _require_grid(times: np.ndarray) -> None:
    if times.size == 0:
        raise WindowTooSmallError("empty time grid")


def certify_ondiag(
    dec: SpectralDecomposition,
    model: FluctuationModel,
    exps: ExponentSet,
    metric: Optional[ResistanceMetric] = None,
    times: Optional[np.ndarray] = None,
) -> BoundCertificate:
    """
    c1 (h^{-1}(t)/t) g(h^{-1}(t))^{θ1} <= p_t(x,x) <= c2 h_l^{-1}(t)/t <= c3 (h^{-1}(t)/t) f_l(h^{-1}(t))^{-1}
    """
    scale = eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    diag = kernel_diagonal(dec, times)
    r = scale.h_inv(times)

    lower = (r / times * model.g(r) ** exps.theta1)[:, None]
    upper = (scale.h_l_inv(times) / times)[:, None]
    weak = (r / times / model.f_l(r))[:, None]
    lo_ratio, up_ratio, weak_ratio = diag / lower, diag / upper, diag / weak
    c1, c2, c3 = float(lo_ratio.min()), float(up_ratio.max()), float(weak_ratio.max())

    center = metric.center if metric is not None else 0
    mid = _middle_decade(times)
    if mid.sum() >= 2:
        slope = float(np.polyfit(np.log(times[mid]), np.log(diag[mid, center]), 1)[0])
    else:
        slope = float("nan")
    predicted = -model.alpha / (model.alpha + 1.0)

    i, x = np.unravel_index(int(np.argmin(lo_ratio)), lo_ratio.shape)
    j, y = np.unravel_index(int(np.argmax(up_ratio)), up_ratio.shape)
    verdict = HOLDS if _finite_positive(c1) and np.isfinite(c2) and np.isfinite(c3) else VIOLATED
    cert = BoundCertificate(
        bound_id="ondiag",
        grid={**_window_description(scale, times), "vertices": dec.n},
        constants={"c1": c1, "c2": c2, "c3": c3},
        ratio_min=float(lo_ratio.min()),
        ratio_max=float(up_ratio.max()),
        verdict=verdict,
        witnesses=(
            {"side": "lower", "x": dec.network.ids[x], "t": float(times[i])},
            {"side": "upper", "x": dec.network.ids[y], "t": float(times[j])},
        ),
        metrics={
            "spread": c2 / c1 if c1 > 0 else math.inf,
            "slope": slope,
            "predicted_slope": predicted,
            "slope_center": dec.network.ids[center],
            "predicted_exponents": predicted_exponents(model, exps),
        },
    )
    logger.info("ondiag: c1=%.4g c2=%.4g spread=%.4g slope=%.4f (%s)", c1, c2, cert.metrics["spread"], slope, verdict)
    return cert


@dataclass(frozen=True)
class ExitSample:
    x: int
    r: float
    mean: float
    times: np.ndarray
    tail: np.ndarray


def exit_samples(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    model: FluctuationModel,
    times: np.ndarray,
    centers: Optional[Sequence[int]] = None,
    radii: Optional[Sequence[float]] = None,
) -> list[ExitSample]:
    """
    (x0, r) 格子上の期待脱出時間と脱出時刻の分布。全体を覆う球は飛ばす。
    """
    centers = grid_vertices(net.n, include=metric.center) if centers is None else np.asarray(centers)
    radii = attained_radii(metric, model.r_min, model.r_max / 2.0) if radii is None else np.asarray(radii, dtype=float)
    samples: list[ExitSample] = []
    for x in centers:
        for r in radii:
            ball = resistance_ball(metric, int(x), float(r))
            if len(ball.members) == net.n:
                continue
            mean = expected_exit_time(net, ball, int(x))
            spectrum = killed_spectrum(net, ball)
            tail = 1.0 - np.asarray(spectrum.survival(int(x), times))
            samples.append(ExitSample(x=int(x), r=float(r), mean=mean, times=times, tail=np.clip(tail, 0.0, 1.0)))
    return samples


def refit_c_q(model: FluctuationModel, exps: ExponentSet, samples: Sequence[ExitSample]) -> FluctuationModel:
    """r q(r) が期待脱出時間の中央値に合うように c_q を選び直す。"""
    if not samples:
        return model
    unit = eval_scale(model.with_c_q(1.0), gamma1=exps.gamma1)
    ratios = [s.mean / (s.r * float(unit.q(s.r))) for s in samples]
    return model.with_c_q(float(np.median(ratios)))


def certify_exit_times(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    model: FluctuationModel,
    samples: Optional[Sequence[ExitSample]] = None,
) -> BoundCertificate:
    """
    c_lo h_l(r g(r)^2) <= E^{x0} T_{B(x0, r)} <= c_up h_u(r)
    """
    scale = eval_scale(model)
    if samples is None:
        samples = exit_samples(net, metric, model, time_grid(scale))
    if not samples:
        raise WindowTooSmallError("no proper balls in the exit-time grid")
    r = np.array([s.r for s in samples])
    means = np.array([s.mean for s in samples])
    lower = means / scale.h_l(r * model.g(r) ** 2)
    upper = means / scale.h_u(r)
    c_lo, c_up = float(lower.min()), float(upper.max())
    k_lo, k_up = int(np.argmin(lower)), int(np.argmax(upper))
    verdict = HOLDS if _finite_positive(c_lo) and np.isfinite(c_up) else VIOLATED
    return BoundCertificate(
        bound_id="exit_times",
        grid={"balls": len(samples), "radii": sorted(set(float(v) for v in r))},
        constants={"c_lo": c_lo, "c_up": c_up},
        ratio_min=c_lo,
        ratio_max=c_up,
        verdict=verdict,
        witnesses=(
            {"side": "lower", "x": net.ids[samples[k_lo].x], "r": samples[k_lo].r},
            {"side": "upper", "x": net.ids[samples[k_up].x], "r": samples[k_up].r},
        ),
        metrics={"spread": c_up / c_lo if c_lo > 0 else math.inf},
    )


def certify_exit_tail(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    model: FluctuationModel,
    exps: ExponentSet,
    samples: Optional[Sequence[ExitSample]] = None,
    times: Optional[np.ndarray] = None,
) -> BoundCertificate:
    """
    P^x(T_B <= t) <= c1 exp(-c2 Φ) を q 形（γ1）と V 形（θ3）の両方で当てはめる。c1 = 1 に固定。
    """
    base = eval_scale(model)
    times = time_grid(base) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    if samples is None:
        samples = exit_samples(net, metric, model, times)
    model = refit_c_q(model, exps, samples)
    scale = eval_scale(model, gamma1=exps.gamma1)
    floor = float(conf.get("KERNEL_NOISE_FLOOR"))

    rows = []
    for s in samples:
        keep = (s.tail > floor) & (s.tail < 1.0 - 1e-12)
        for t, p in zip(s.times[keep], s.tail[keep]):
            rows.append((s.x, s.r, float(t), float(p)))
    if not rows:
        # 浅い時刻では確率が丸めで 0: 評価式は自明に成り立つ
        return BoundCertificate(
            bound_id="exit_tail",
            grid={"balls": len(samples), "resolved_points": 0},
            constants={"c1": 1.0, "c2_q": math.inf, "c2_v": math.inf, "c_q": model.c_q},
            ratio_min=0.0,
            ratio_max=0.0,
            verdict=HOLDS,
            metrics={"trivial": True},
        )

    xs, rs, ts, ps = (np.array(col) for col in zip(*rows))
    rq = scale.q_inv(ts / rs)
    phi_q = rs / rq * model.g(rq) ** exps.gamma1
    rv = model.V_inv(ts / rs)
    phi_v = rs / rv * model.g(rv) ** exps.theta3
    neg_log = -np.log(ps)
    c2_q = float(np.min(neg_log / phi_q))
    c2_v = float(np.min(neg_log / phi_v))
    k = int(np.argmin(neg_log / phi_q))
    verdict = HOLDS if c2_q > 0 and c2_v > 0 else VIOLATED
    cert = BoundCertificate(
        bound_id="exit_tail",
        grid={"balls": len(samples), "resolved_points": int(ps.size), "t_points": int(times.size)},
        constants={"c1": 1.0, "c2_q": c2_q, "c2_v": c2_v, "c_q": model.c_q},
        ratio_min=float(ps.min()),
        ratio_max=float(ps.max()),
        verdict=verdict,
        witnesses=({"x": net.ids[int(xs[k])], "r": float(rs[k]), "t": float(ts[k]), "tail": float(ps[k])},),
    )
    logger.info("exit tail: c2_q=%.4g c2_v=%.4g c_q=%.4g (%s)", c2_q, c2_v, model.c_q, verdict)
    return cert


def _kernel_rows(dec: SpectralDecomposition, t: float, rows: np.ndarray) -> np.ndarray:
    phi = dec.eigenfunctions
    return (phi[rows] * np.exp(-dec.eigenvalues * t)) @ phi.T


def certify_neardiag(
    dec: SpectralDecomposition,
    metric: ResistanceMetric,
    model: FluctuationModel,
    exps: ExponentSet,
    times: Optional[np.ndarray] = None,
    reach: float = 1.0,
) -> BoundCertificate:
    """
    R(x,y) <= reach h^{-1}(t) g(h^{-1}(t))^{θ1} を満たす対で p_t(x,y) >= c' (h^{-1}(t)/t) g(h^{-1}(t))^{θ1}。
    窓の外の対は格子から除く（件数を報告する）。
    """
    scale = eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    rows = grid_vertices(dec.n, include=metric.center)
    best, best_diag = math.inf, math.inf
    witness: dict[str, Any] = {}
    included = excluded = 0
    for t in times:
        r = float(scale.h_inv(t))
        gr = float(model.g(r)) ** exps.theta1
        window = reach * r * gr
        prefactor = r / t * gr
        p = _kernel_rows(dec, t, rows)
        dist = metric.matrix[rows]
        mask = dist <= window
        included += int(mask.sum())
        excluded += int((~mask).sum())
        ratio = np.where(mask, p / prefactor, np.inf)
        k = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
        if ratio[k] < best:
            best = float(ratio[k])
            witness = {"x": dec.network.ids[rows[k[0]]], "y": dec.network.ids[int(k[1])], "t": float(t)}
        diag = p[np.arange(rows.size), rows] / prefactor
        best_diag = min(best_diag, float(diag.min()))
    verdict = HOLDS if _finite_positive(best) else VIOLATED
    return BoundCertificate(
        bound_id="neardiag",
        grid={**_window_description(scale, times), "reach": reach, "pairs_included": included, "pairs_excluded": excluded},
        constants={"c": best},
        ratio_min=best,
        ratio_max=best_diag,
        verdict=verdict,
        witnesses=(witness,) if witness else (),
        metrics={"ondiag_constant": best_diag, "ratio_to_ondiag": best / best_diag if best_diag > 0 else math.nan},
    )


# ---------------------------------------------------------------------------
# 連鎖と非対角
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainPlan:
    x: int
    y: int
    N: int
    chain: tuple[int, ...]
    steps: tuple[float, ...]

    def as_dict(self) -> dict[str, Any]:
        return {"x": self.x, "y": self.y, "N": self.N, "chain": list(self.chain), "steps": list(self.steps)}


def chain_count(
    metric: ResistanceMetric,
    model: FluctuationModel,
    exps: ExponentSet,
    x: int,
    y: int,
    t: float,
    reach: float = 1.0,
    scale: Optional[ScaleFunctions] = None,
) -> ChainPlan:
    """
    N = min{n : R(x,y)/n <= reach h^{-1}(t/n) g(h^{-1}(t/n))^{θ1}} を増加探索で求め、その n の連鎖を付ける。
    """
    if x == y:
        raise ValueError("chain count needs distinct endpoints")
    if t <= 0:
        raise ValueError("time must be positive")
    scale = scale or eval_scale(model)
    cap = metric.network.n
    ns = np.arange(1, cap + 1, dtype=float)
    r = scale.h_inv(t / ns)
    ok = metric(x, y) / ns <= reach * r * model.g(r) ** exps.theta1
    if not ok.any():
        raise WindowTooSmallError(f"chain count exceeds {cap} segments for R={metric(x, y):.4g}, t={t:.4g}")
    n = int(ns[int(np.argmax(ok))])
    probe = chaining_probe(metric, x, y, n)
    return ChainPlan(x=int(x), y=int(y), N=n, chain=probe.chain, steps=probe.steps)


def _offdiag_pairs(n: int, centers: np.ndarray, limit: int) -> np.ndarray:
    pairs = np.array([(x, y) for x in centers for y in range(n) if y != x], dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] > limit:
        pairs = pairs[np.linspace(0, pairs.shape[0] - 1, limit).round().astype(np.int64)]
    return pairs


def _fit_decay(log_ratio: np.ndarray, phi: np.ndarray) -> float:
    if phi.size < 2 or np.ptp(phi) == 0:
        return 0.0
    return float(-np.polyfit(phi, log_ratio, 1)[0])


def certify_offdiag(
    dec: SpectralDecomposition,
    metric: ResistanceMetric,
    model: FluctuationModel,
    exps: ExponentSet,
    chaining: Optional[ChainingReport] = None,
    times: Optional[np.ndarray] = None,
) -> BoundCertificate:
    """
    上界 c1 (h^{-1}/t) f_l(h^{-1})^{-1} exp(-c2 (R/V^{-1}(t/R)) g(V^{-1}(t/R))^{θ3})
    下界 c3 (h^{-1}/t) g(h^{-1})^{θ1} exp(-c4 (R/V^{-1}(t/R)) g(V^{-1}(t/R))^{-θ2})（連鎖条件が通ったときのみ）
    """
    scale = eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    centers = grid_vertices(dec.n, include=metric.center)
    pairs = _offdiag_pairs(dec.n, centers, int(conf.get("CERT_PAIRS")))
    if pairs.size == 0:
        raise WindowTooSmallError("no off-diagonal pairs")
    floor = float(conf.get("KERNEL_NOISE_FLOOR"))
    R = metric.matrix[pairs[:, 0], pairs[:, 1]]
    mid = _middle_decade(times)

    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("t", "k", "p", "up_pref", "low_pref", "phi3", "phi2", "shape", "mid")}
    dropped = 0
    diag_max = kernel_diagonal(dec, times).max(axis=1)
    for i, t in enumerate(times):
        p = _kernel_rows(dec, t, centers)
        row_of = {int(c): j for j, c in enumerate(centers)}
        values = p[[row_of[int(a)] for a in pairs[:, 0]], pairs[:, 1]]
        keep = values > floor * diag_max[i]
        dropped += int((~keep).sum())
        r = float(scale.h_inv(t))
        rv = model.V_inv(t / R[keep])
        g_rv = model.g(rv)
        cols["t"].append(np.full(keep.sum(), t))
        cols["k"].append(np.flatnonzero(keep))
        cols["p"].append(values[keep])
        cols["up_pref"].append(np.full(keep.sum(), r / t / float(model.f_l(r))))
        cols["low_pref"].append(np.full(keep.sum(), r / t * float(model.g(r)) ** exps.theta1))
        cols["phi3"].append(R[keep] / rv * g_rv**exps.theta3)
        cols["phi2"].append(R[keep] / rv * g_rv ** (-(exps.theta2 or exps.theta1)))
        cols["shape"].append((R[keep] ** (1.0 + model.alpha) / t) ** (1.0 / model.alpha))
        cols["mid"].append(np.full(keep.sum(), bool(mid[i])))
    data = {k: np.concatenate(v) if v else np.array([]) for k, v in cols.items()}
    if data["p"].size == 0:
        raise WindowTooSmallError("all off-diagonal kernel values below the noise floor")

    log_up = np.log(data["p"] / data["up_pref"])
    c2 = _fit_decay(log_up, data["phi3"])
    c1 = float(np.max(np.exp(log_up + c2 * data["phi3"]))) if c2 > 0 else math.inf
    upper_ok = c2 > 0 and np.isfinite(c1)

    lower_state = SKIPPED
    c3 = c4 = math.nan
    if chaining is not None and chaining.passed and exps.theta2 is not None:
        log_low = np.log(data["p"] / data["low_pref"])
        c4 = max(_fit_decay(log_low, data["phi2"]), 0.0)
        c3 = float(np.min(np.exp(log_low + c4 * data["phi2"])))
        lower_state = HOLDS if _finite_positive(c3) else VIOLATED
    else:
        logger.warning("off-diagonal lower bound skipped: chaining probe %s", "failed" if chaining else "not run")

    # (R^{α+1}/t)^{1/α} に対する log p の形（中央の1桁）
    sel = data["mid"].astype(bool)
    shape_slope = shape_corr = math.nan
    if sel.sum() >= 3 and np.ptp(data["shape"][sel]) > 0:
        shape_slope = float(np.polyfit(data["shape"][sel], np.log(data["p"][sel]), 1)[0])
        shape_corr = float(np.corrcoef(data["shape"][sel], np.log(data["p"][sel]))[0, 1])

    plans = []
    t_mid = float(times[len(times) // 2])
    for a, b in pairs[:3]:
        try:
            plans.append(chain_count(metric, model, exps, int(a), int(b), t_mid, scale=scale).as_dict())
        except WindowTooSmallError as exc:
            plans.append({"x": int(a), "y": int(b), "N": None, "reason": exc.reason})

    verdict = HOLDS if upper_ok and lower_state != VIOLATED else VIOLATED
    k_worst = int(np.argmax(log_up + (c2 if c2 > 0 else 0.0) * data["phi3"]))
    worst_pair = pairs[int(data["k"][k_worst])]
    cert = BoundCertificate(
        bound_id="offdiag",
        grid={
            **_window_description(scale, times),
            "pairs": int(pairs.shape[0]),
            "points": int(data["p"].size),
            "below_noise_floor": dropped,
        },
        constants={"c1": c1, "c2": c2, "c3": c3, "c4": c4},
        ratio_min=float(np.exp(log_up.min())),
        ratio_max=float(np.exp(log_up.max())),
        verdict=verdict,
        witnesses=(
            {
                "side": "upper",
                "x": dec.network.ids[int(worst_pair[0])],
                "y": dec.network.ids[int(worst_pair[1])],
                "t": float(data["t"][k_worst]),
            },
        ),
        metrics={
            "lower_bound": lower_state,
            "chaining_constant": chaining.worst_constant if chaining is not None else None,
            "shape_slope": shape_slope,
            "shape_correlation": shape_corr,
            "chain_plans": plans,
        },
    )
    logger.info("offdiag: c1=%.4g c2=%.4g lower=%s shape_corr=%.4f", c1, c2, lower_state, shape_corr)
    return cert


# ---------------------------------------------------------------------------
# 空間的・局所的な揺らぎ
# ---------------------------------------------------------------------------


def _range(values: np.ndarray) -> list[float]:
    return [float(values.min()), float(values.max())]


def _hypothesis_spread(values: np.ndarray) -> float:
    lo, hi = float(values.min()), float(values.max())
    return hi / lo if lo > 0 else math.inf


def certify_fluctuations(
    dec: SpectralDecomposition,
    profile: VolumeProfile,
    model: FluctuationModel,
    exps: ExponentSet,
    times: Optional[np.ndarray] = None,
) -> BoundCertificate:
    """
    体積の inf/sup が V_l, V_u に沿うとき（窓内で比の幅が HYPOTHESIS_MAX_SPREAD 以下）、
    inf_x / sup_x の t p_t(x,x) を h^{-1} g^{θ1}, h_u^{-1}, h_l^{-1} と比べた4つの範囲を出す。
    """
    sel = (profile.radii >= model.r_min) & (profile.radii <= model.r_max)
    radii = profile.radii[sel]
    inf_ratio = profile.volumes[:, sel].min(axis=0) / model.V_l(radii)
    sup_ratio = profile.volumes[:, sel].max(axis=0) / model.V_u(radii)
    limit = float(conf.get("HYPOTHESIS_MAX_SPREAD"))
    hypotheses = {
        "inf_ratio_range": _range(inf_ratio),
        "sup_ratio_range": _range(sup_ratio),
        "inf_spread": _hypothesis_spread(inf_ratio),
        "sup_spread": _hypothesis_spread(sup_ratio),
        "limit": limit,
    }
    if hypotheses["inf_spread"] > limit or hypotheses["sup_spread"] > limit:
        raise HypothesesNotMetError(f"volume ratios not bounded across the window: {hypotheses}")

    scale = eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    low = _lowest_decade(times)
    tp = times[:, None] * kernel_diagonal(dec, times)
    r = scale.h_inv(times)
    inf_tp, sup_tp = tp.min(axis=1), tp.max(axis=1)
    ranges = {
        "inf_lower": inf_tp / (r * model.g(r) ** exps.theta1),
        "inf_upper": inf_tp / scale.h_u_inv(times),
        "sup_upper": sup_tp / scale.h_l_inv(times),
        "sup_lower": sup_tp / scale.h_l_inv(times),
    }
    reported = {k: _range(v[low]) for k, v in ranges.items()}
    # inf_lower の桁は g(r)^θ1 の大きさで決まる
    g_theta = model.g(r[low]) ** exps.theta1
    finite = all(_finite_positive(lo) and np.isfinite(hi) for lo, hi in reported.values())
    separation = sup_tp / inf_tp
    degenerate = model.family == "uniform"
    cert = BoundCertificate(
        bound_id="fluctuations",
        grid={**_window_description(scale, times), "lowest_decade_points": int(low.sum())},
        constants={k: (v[0] if k.endswith("lower") else v[1]) for k, v in reported.items()},
        ratio_min=min(v[0] for v in reported.values()),
        ratio_max=max(v[1] for v in reported.values()),
        verdict=HOLDS if finite else VIOLATED,
        metrics={
            "ranges": reported,
            "log10_ranges": {k: [float(np.log10(lo)), float(np.log10(hi))] for k, (lo, hi) in reported.items() if lo > 0 and hi > 0},
            "g_theta1_range": _range(g_theta),
            "hypotheses": hypotheses,
            "degenerate": degenerate,
            "separation_range": _range(separation),
            "inverse_ratio": _range(scale.h_l_inv(times) / scale.h_u_inv(times)),
            "predicted_exponents": predicted_exponents(model, exps),
        },
    )
    logger.info("fluctuations: separation %s degenerate=%s", cert.metrics["separation_range"], degenerate)
    return cert


@dataclass(frozen=True)
class LocalEnvelope:
    vertex: int
    radii: np.ndarray
    ratio: np.ndarray
    family: str
    fit: EnvelopeFit
    r_ref: float

    def f_l(self, r: np.ndarray | float) -> np.ndarray:
        return _local_model(self).f_l(r)

    def f_u(self, r: np.ndarray | float) -> np.ndarray:
        return _local_model(self).f_u(r)

    def as_dict(self) -> dict[str, Any]:
        return {
            "vertex": self.vertex,
            "family": self.family,
            "params": {"delta": self.fit.delta, "a1": self.fit.a1, "a2": self.fit.a2},
            "c_l": self.fit.c_l,
            "c_u": self.fit.c_u,
            "ratio_range": _range(self.ratio),
        }


def _local_model(env: LocalEnvelope, base: Optional[FluctuationModel] = None) -> FluctuationModel:
    base = base or FluctuationModel(alpha=1.0, scale=1.0, r_ref=env.r_ref)
    return FluctuationModel(
        alpha=base.alpha,
        scale=base.scale,
        family=env.family,
        delta=env.fit.delta,
        a1=env.fit.a1,
        a2=env.fit.a2,
        c_l=env.fit.c_l,
        c_u=env.fit.c_u,
        r_min=base.r_min,
        r_max=base.r_max,
        r_ref=env.r_ref,
        log_r0=math.log(env.r_ref),
    )


def local_envelope(profile: VolumeProfile, model: FluctuationModel, x: int) -> LocalEnvelope:
    sel = (profile.radii >= model.r_min) & (profile.radii <= model.r_max)
    radii = profile.radii[sel]
    ratio = profile.volumes[x, sel] / model.V(radii)
    fit = fit_envelopes(radii, ratio, ratio, model.family, r_ref=model.r_ref, max_exponent=model.alpha)
    return LocalEnvelope(vertex=int(x), radii=radii, ratio=ratio, family=model.family, fit=fit, r_ref=model.r_ref)


def escape_profile(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    model: FluctuationModel,
    x: int,
    radii: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """
    半径ごとの R(x, B(x,r)^c)/r と R(x, B(x,r)^c)/(r g(r)^2)。全体を覆う球は除く。
    """
    radii = attained_radii(metric, model.r_min, model.r_max) if radii is None else np.asarray(radii, dtype=float)
    rows = []
    for r in radii:
        ball = resistance_ball(metric, x, float(r))
        if len(ball.members) == net.n:
            continue
        escape = escape_resistance(net, ball, metric)
        rows.append(
            {
                "vertex": net.ids[x],
                "r": float(r),
                "escape": escape,
                "ratio": escape / r,
                "ratio_g": escape / (r * float(model.g(r)) ** 2),
            }
        )
    return pd.DataFrame(rows, columns=["vertex", "r", "escape", "ratio", "ratio_g"])


def certify_local(
    dec: SpectralDecomposition,
    metric: ResistanceMetric,
    profile: VolumeProfile,
    model: FluctuationModel,
    x: int,
    times: Optional[np.ndarray] = None,
) -> BoundCertificate:
    """
    1頂点の局所包絡線 f~_l, f~_u に対し t p_t(x,x) / h~_u^{-1}(t) の最小と t p_t(x,x) / h~_l^{-1}(t) の最大を見る。
    R(x, B(x,r)^c)/r が RESCOND_FLOOR を下回れば仮定不成立。
    """
    escapes = escape_profile(dec.network, metric, model, x)
    floor = float(conf.get("RESCOND_FLOOR"))
    if escapes.empty or float(escapes["ratio"].min()) < floor:
        worst = float(escapes["ratio"].min()) if not escapes.empty else math.nan
        raise HypothesesNotMetError(f"escape resistance ratio {worst:.4g} below {floor} at vertex {dec.network.ids[x]}")

    env = local_envelope(profile, model, x)
    local = _local_model(env, model)
    h_l = lambda r: r * local.c_l * local.V_l(r)  # noqa: E731
    h_u = lambda r: r * local.c_u * local.V_u(r)  # noqa: E731

    scale = eval_scale(model)
    times = time_grid(scale) if times is None else np.asarray(times, dtype=float)
    _require_grid(times)
    low = _lowest_decade(times)
    tp = times * kernel_diagonal(dec, times)[:, x]
    inf_ratio = tp / monotone_inverse(h_u, times, model.r_ref)
    sup_ratio = tp / monotone_inverse(h_l, times, model.r_ref)
    liminf = float(inf_ratio[low].min())
    limsup = float(sup_ratio[low].max())
    verdict = HOLDS if np.isfinite(liminf) and _finite_positive(limsup) else VIOLATED
    return BoundCertificate(
        bound_id="local",
        grid={**_window_description(scale, times), "vertex": dec.network.ids[x]},
        constants={"liminf_upper": liminf, "limsup_upper": limsup},
        ratio_min=float(inf_ratio.min()),
        ratio_max=float(sup_ratio.max()),
        verdict=verdict,
        metrics={
            "local_envelope": env.as_dict(),
            "global_envelope": {"family": model.family, "params": model.params, "c_l": model.c_l, "c_u": model.c_u},
            "escape_ratios": [
                {"r": float(r), "ratio": float(q)} for r, q in zip(escapes["r"], escapes["ratio"])
            ],
        },
    )
