from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
import pandas as pd

from . import conf
from .exceptions import FitError, NumericalInvariantError, ScalingViolationError
from .network import MeasuredNetwork
from .resistance import ResistanceMetric, resistance_ball

logger = logging.getLogger(__name__)

Family = Literal["uniform", "polynomial", "logarithmic"]
FAMILIES: tuple[str, ...] = ("uniform", "polynomial", "logarithmic")

# 単調逆関数の二分法: 相対精度 1e-12 に届くまで（log 区間幅が 2^-k で縮む）
_BISECTION_STEPS = 200
_BISECTION_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class VolumeProfile:
    """
    V(x, r) = μ(B(x, r)) を半径グリッド上で並べたもの。volumes[x, k] = V(x, radii[k])。
    """

    network_name: str
    ids: tuple[str, ...]
    radii: np.ndarray
    volumes: np.ndarray
    total_mass: float

    @property
    def inf_envelope(self) -> np.ndarray:
        return self.volumes.min(axis=0)

    @property
    def sup_envelope(self) -> np.ndarray:
        return self.volumes.max(axis=0)

    @property
    def median_curve(self) -> np.ndarray:
        return np.median(self.volumes, axis=0)

    @property
    def midline_curve(self) -> np.ndarray:
        """inf / sup 包絡線の幾何平均。"""
        return np.sqrt(self.inf_envelope * self.sup_envelope)

    def reference_curve(self, kind: str) -> np.ndarray:
        if kind == "midline":
            return self.midline_curve
        if kind == "median":
            return self.median_curve
        raise ValueError(f"unknown reference curve: {kind}")

    def to_frame(self) -> pd.DataFrame:
        n, k = self.volumes.shape
        return pd.DataFrame(
            {
                "vertex": np.repeat(np.array(self.ids, dtype=object), k),
                "r": np.tile(self.radii, n),
                "V": self.volumes.reshape(-1),
            }
        )

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path


def radius_grid(metric: ResistanceMetric, max_radii: Optional[int] = None) -> np.ndarray:
    """
    実現される抵抗値（昇順）を最大 max_radii 個まで対数等間隔に間引き、直径を少し超える半径を足す。
    """
    max_radii = int(max_radii or conf.get("PROFILE_MAX_RADII"))
    vals = metric.distinct_values
    if vals.size == 0:
        return np.array([1.0])
    if vals.size > max_radii:
        targets = np.geomspace(vals[0], vals[-1], max_radii)
        pos = np.searchsorted(vals, targets)
        pos = np.clip(pos, 1, vals.size - 1)
        left, right = vals[pos - 1], vals[pos]
        pick = np.where(np.log(targets / left) <= np.log(right / targets), left, right)
        vals = np.unique(pick)
    return np.append(vals, metric.diameter * (1.0 + 1e-9))


def volume_profile(
    net: MeasuredNetwork,
    metric: ResistanceMetric,
    radii: Optional[np.ndarray] = None,
) -> VolumeProfile:
    radii = radius_grid(metric) if radii is None else np.asarray(radii, dtype=float)
    volumes = np.empty((net.n, radii.size))
    for x in range(net.n):
        for k, r in enumerate(radii):
            volumes[x, k] = resistance_ball(metric, x, float(r)).volume
    # 成分の取り方で V(x,.) が減ることはないが、丸めで崩れないよう累積最大を取る
    volumes = np.maximum.accumulate(volumes, axis=1)
    logger.debug("volume profile %s: %d vertices x %d radii", net.name, net.n, radii.size)
    return VolumeProfile(
        network_name=net.name,
        ids=net.ids,
        radii=radii,
        volumes=volumes,
        total_mass=net.total_mass,
    )


def interior_window(radii: np.ndarray, top_fraction: Optional[float] = None) -> tuple[float, float]:
    """
    2番目に小さい半径から、上位 top_fraction（既定 20%）を除いた最大半径まで。
    """
    top_fraction = float(conf.get("WINDOW_TOP_FRACTION") if top_fraction is None else top_fraction)
    k = radii.size
    if k < 3:
        raise FitError(f"radius grid too small for a window ({k} radii)")
    hi = max(1, int(math.ceil((1.0 - top_fraction) * k)) - 1)
    return float(radii[1]), float(radii[hi])


def _log_scale(r: np.ndarray | float, r_ref: float) -> np.ndarray:
    """ℓ(r) = 1 + ln(r_ref / r) ∨ 0（r >= r_ref で 1）。"""
    r = np.asarray(r, dtype=float)
    return 1.0 + np.log(r_ref / np.minimum(r, r_ref))


def _family_curves(
    family: str, r: np.ndarray | float, r_ref: float, delta: float, a1: float, a2: float
) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    if family == "uniform":
        one = np.ones_like(r)
        return one, one.copy()
    if family == "polynomial":
        s = np.minimum(r / r_ref, 1.0)
        return s**delta, s ** (-delta)
    if family == "logarithmic":
        ell = _log_scale(r, r_ref)
        return ell ** (-a1), ell**a2
    raise ValueError(f"unknown envelope family: {family}")


def _family_log_curves(
    family: str, s: np.ndarray, log_r_ref: float, delta: float, a1: float, a2: float
) -> tuple[np.ndarray, np.ndarray]:
    """log f_l, log f_u を s = ln r の関数として返す（r が float で表せない小ささでも有限）。"""
    s = np.asarray(s, dtype=float)
    if family == "uniform":
        zero = np.zeros_like(s)
        return zero, zero.copy()
    if family == "polynomial":
        u = np.minimum(s - log_r_ref, 0.0)
        return delta * u, -delta * u
    if family == "logarithmic":
        log_ell = np.log1p(np.maximum(log_r_ref - s, 0.0))
        return -a1 * log_ell, a2 * log_ell
    raise ValueError(f"unknown envelope family: {family}")


@dataclass(frozen=True)
class FluctuationModel:
    """
    V(r) = scale * r^alpha と揺らぎ f_l, f_u（uniform / polynomial(δ) / logarithmic(a1, a2)）。

    - f_l <= 1 <= f_u、f_l 増加・f_u 減少（族の定義から成り立つ）
    - c_l f_l V <= V(x, r) <= c_u f_u V を窓 [r_min, r_max] 上で満たすように c_l, c_u を決める
    - 半径は窓の上端 r_ref で正規化する
    - 凹性の半径 r0 は log_r0 = ln r0 で持つ（対数族では float の範囲を下回る）
    - β_u, β_l は既定で alpha。beta_upper / beta_lower で別の値を宣言できる
    """

    alpha: float
    scale: float
    family: str = "uniform"
    delta: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    c_l: float = 1.0
    c_u: float = 1.0
    r_min: float = 1.0
    r_max: float = 1.0
    r_ref: float = 1.0
    log_r0: float = 0.0
    b: float = 0.0
    eps: float = 0.0
    c_q: float = 1.0
    residuals: dict[str, float] = field(default_factory=dict)
    reference_curve: str = "midline"
    beta_upper: Optional[float] = None
    beta_lower: Optional[float] = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown envelope family: {self.family}")
        if not (self.alpha > 0 and self.scale > 0):
            raise FitError(f"power law must have positive exponent and scale (alpha={self.alpha}, scale={self.scale})")
        if not math.isfinite(self.log_r0):
            raise FitError(f"concavity radius must be finite on the log scale (log_r0={self.log_r0})")

    @property
    def beta_u(self) -> float:
        return self.alpha if self.beta_upper is None else float(self.beta_upper)

    @property
    def beta_l(self) -> float:
        return self.alpha if self.beta_lower is None else float(self.beta_lower)

    @property
    def r0(self) -> float:
        return math.exp(self.log_r0)

    @property
    def doubling_constant(self) -> float:
        """C_u = sup_r V(2r)/V(r)（窓上）。"""
        r = np.geomspace(self.r_min, self.r_max, 25)
        return float(np.max(self.V(2.0 * r) / self.V(r)))

    @property
    def anti_doubling_constant(self) -> float:
        """C_l = inf_r V(2r)/V(r)（窓上）。"""
        r = np.geomspace(self.r_min, self.r_max, 25)
        return float(np.min(self.V(2.0 * r) / self.V(r)))

    def log_f_at_r0(self) -> tuple[float, float]:
        """(log f_l(r0), log f_u(r0))。"""
        lo, hi = _family_log_curves(self.family, np.array([self.log_r0]), math.log(self.r_ref), self.delta, self.a1, self.a2)
        return float(lo[0]), float(hi[0])

    @property
    def params(self) -> dict[str, float]:
        if self.family == "polynomial":
            return {"delta": self.delta}
        if self.family == "logarithmic":
            return {"a1": self.a1, "a2": self.a2}
        return {}

    def V(self, r: np.ndarray | float) -> np.ndarray:
        return self.scale * np.asarray(r, dtype=float) ** self.alpha

    def V_inv(self, v: np.ndarray | float) -> np.ndarray:
        return (np.asarray(v, dtype=float) / self.scale) ** (1.0 / self.alpha)

    def f_l(self, r: np.ndarray | float) -> np.ndarray:
        return _family_curves(self.family, r, self.r_ref, self.delta, self.a1, self.a2)[0]

    def f_u(self, r: np.ndarray | float) -> np.ndarray:
        return _family_curves(self.family, r, self.r_ref, self.delta, self.a1, self.a2)[1]

    def g(self, r: np.ndarray | float) -> np.ndarray:
        lo, hi = _family_curves(self.family, r, self.r_ref, self.delta, self.a1, self.a2)
        return lo / hi

    def V_l(self, r: np.ndarray | float) -> np.ndarray:
        return self.f_l(r) * self.V(r)

    def V_u(self, r: np.ndarray | float) -> np.ndarray:
        return self.f_u(r) * self.V(r)

    def spread(self, r: np.ndarray | float) -> np.ndarray:
        """包絡線の幅 c_u f_u(r) / (c_l f_l(r))。"""
        return (self.c_u * self.f_u(r)) / (self.c_l * self.f_l(r))

    def with_c_q(self, c_q: float) -> "FluctuationModel":
        return replace(self, c_q=float(c_q))

    def as_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "scale": self.scale,
            "family": self.family,
            "params": self.params,
            "c_l": self.c_l,
            "c_u": self.c_u,
            "window": [self.r_min, self.r_max],
            "r_ref": self.r_ref,
            "r0": self.r0,
            "log_r0": self.log_r0,
            "beta_u": self.beta_u,
            "beta_l": self.beta_l,
            "b": self.b,
            "eps": self.eps,
            "c_q": self.c_q,
            "residuals": dict(self.residuals),
            "reference_curve": self.reference_curve,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FluctuationModel":
        params = data.get("params") or {}
        window = data.get("window") or [1.0, 1.0]
        return cls(
            alpha=float(data["alpha"]),
            scale=float(data.get("scale", 1.0)),
            family=str(data.get("family", "uniform")),
            delta=float(params.get("delta", 0.0)),
            a1=float(params.get("a1", 0.0)),
            a2=float(params.get("a2", 0.0)),
            c_l=float(data.get("c_l", 1.0)),
            c_u=float(data.get("c_u", 1.0)),
            r_min=float(window[0]),
            r_max=float(window[1]),
            r_ref=float(data.get("r_ref", window[1])),
            log_r0=_log_r0_from(data, window),
            b=float(data.get("b", 0.0)),
            eps=float(data.get("eps", 0.0)),
            c_q=float(data.get("c_q", 1.0)),
            residuals={k: float(v) for k, v in (data.get("residuals") or {}).items()},
            reference_curve=str(data.get("reference_curve", "midline")),
            beta_upper=_optional_float(data.get("beta_u")),
            beta_lower=_optional_float(data.get("beta_l")),
        )


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


def _log_r0_from(data: dict[str, Any], window: list[float]) -> float:
    if data.get("log_r0") is not None:
        return float(data["log_r0"])
    r0 = float(data.get("r0") or 0.0)
    return math.log(r0) if r0 > 0 else math.log(float(data.get("r_ref", window[1])))


def monotone_envelopes(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    lower: 最大の非減少な下からの近似（右からの累積最小）
    upper: 最小の非増加な上からの近似（右からの累積最大）
    どちらもデータを越えない。
    """
    lo = np.minimum.accumulate(lower[::-1])[::-1]
    hi = np.maximum.accumulate(upper[::-1])[::-1]
    return lo, hi


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2 or np.ptp(x) == 0.0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def default_fluctuation_exponents(family: str, alpha: float, delta: float) -> tuple[float, float]:
    """
    f_l, f_u の凹性・g の減衰の条件を満たす最小の (b, eps)。
    - uniform: 0
    - polynomial: δ
    - logarithmic: 任意の正の値でよいので、非対角条件の上限の 1/4
    """
    if family == "uniform":
        return 0.0, 0.0
    if family == "polynomial":
        return delta, delta
    value = alpha / (32.0 * (2.0 + alpha) ** 2)
    return value, value


def _concavity_log_radius(family: str, r_ref: float, b: float, a1: float, a2: float) -> float:
    """ln r0。f_l^{1/b}, f_u^{-1/b} が [0, r0] で凹になる最大の r0。"""
    if family != "logarithmic" or b <= 0.0 or max(a1, a2) == 0.0:
        return math.log(r_ref)
    # ℓ^{-p} は ℓ >= p + 1 で凹
    return math.log(r_ref) - max(a1, a2) / b


@dataclass(frozen=True)
class EnvelopeFit:
    delta: float
    a1: float
    a2: float
    c_l: float
    c_u: float
    residuals: dict[str, float]


def fit_envelopes(
    radii: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    family: str,
    r_ref: float,
    max_exponent: Optional[float] = None,
) -> EnvelopeFit:
    """
    比 V(x,r)/V(r) の下側・上側包絡線を族に当てはめ、括り定数 c_l, c_u を決める。
    局所包絡線（1頂点）にも同じ手順を使う。

    max_exponent を与えると δ と a2 をその値で頭打ちにする（alpha を渡すと V_u, h_u が狭義増加のまま）。
    頭打ちにした分は c_u が吸収するので括りは崩れない。
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown envelope family: {family}")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))) or lower.min() <= 0:
        raise FitError("envelope ratios must be finite and positive")
    lo_mono, hi_mono = monotone_envelopes(lower, upper)
    log_lo, log_hi = np.log(lo_mono), np.log(hi_mono)

    delta = a1 = a2 = 0.0
    if family == "polynomial":
        s = np.log(np.minimum(radii / r_ref, 1.0))
        delta = max(_slope(s, log_lo), -_slope(s, log_hi), 0.0)
    elif family == "logarithmic":
        ell = np.log(_log_scale(radii, r_ref))
        a1 = max(-_slope(ell, log_lo), 0.0)
        a2 = max(_slope(ell, log_hi), 0.0)

    if max_exponent is not None:
        cap = float(max_exponent)
        if delta > cap or a2 > cap:
            logger.info("capping envelope exponents at %.4g (delta=%.4g, a2=%.4g)", cap, delta, a2)
        delta, a2 = min(delta, cap), min(a2, cap)

    f_lo, f_hi = _family_curves(family, radii, r_ref, delta, a1, a2)
    c_l = float(np.min(lower / f_lo))
    c_u = float(np.max(upper / f_hi))
    residuals = {
        "lower_rms": float(np.sqrt(np.mean((log_lo - np.log(c_l * f_lo)) ** 2))),
        "upper_rms": float(np.sqrt(np.mean((log_hi - np.log(c_u * f_hi)) ** 2))),
    }
    if not (np.isfinite(c_l) and np.isfinite(c_u) and c_l > 0):
        raise FitError(f"envelope constants not finite (c_l={c_l}, c_u={c_u})")
    return EnvelopeFit(delta=delta, a1=a1, a2=a2, c_l=c_l, c_u=c_u, residuals=residuals)


def fit_model(
    profile: VolumeProfile,
    family: str = "uniform",
    window: Optional[tuple[float, float]] = None,
    reference: Optional[str] = None,
) -> FluctuationModel:
    """
    基準曲線（既定は inf / sup 包絡線の幾何平均、"median" で中央値曲線）の log-log 最小二乗で alpha を決め、
    族のパラメータと括り定数を当てはめる。
    """
    reference = str(reference or conf.get("VOLUME_REFERENCE_CURVE"))
    if family not in FAMILIES:
        raise ValueError(f"unknown envelope family: {family}")
    grid = profile.radii
    decades = math.log10(grid[-1] / grid[0]) if grid.size and grid[0] > 0 else 0.0
    min_decades = float(conf.get("MIN_GRID_DECADES"))
    if decades < min_decades:
        raise FitError(f"too-narrow grid: [{grid[0]:.4g}, {grid[-1]:.4g}] spans {decades:.2f} decades (< {min_decades})")
    r_min, r_max = window or interior_window(grid)
    sel = (grid >= r_min) & (grid <= r_max)
    radii = grid[sel]
    if radii.size < 3:
        raise FitError(f"window [{r_min:.4g}, {r_max:.4g}] holds {radii.size} radii (need 3)")

    curve = profile.reference_curve(reference)[sel]
    log_r, log_v = np.log(radii), np.log(curve)
    alpha, intercept = np.polyfit(log_r, log_v, 1)
    alpha, scale = float(alpha), float(math.exp(intercept))
    if not (np.isfinite(alpha) and alpha > 0):
        raise FitError(f"non-increasing {reference} volume curve (alpha={alpha})")
    fitted = scale * radii**alpha
    alpha_rms = float(np.sqrt(np.mean((log_v - np.log(fitted)) ** 2)))

    ratios = profile.volumes[:, sel] / fitted
    env = fit_envelopes(radii, ratios.min(axis=0), ratios.max(axis=0), family, r_ref=r_max, max_exponent=alpha)
    b, eps = default_fluctuation_exponents(family, alpha, env.delta)
    model = FluctuationModel(
        alpha=alpha,
        scale=scale,
        family=family,
        delta=env.delta,
        a1=env.a1,
        a2=env.a2,
        c_l=env.c_l,
        c_u=env.c_u,
        r_min=r_min,
        r_max=r_max,
        r_ref=r_max,
        log_r0=_concavity_log_radius(family, r_max, b, env.a1, env.a2),
        b=b,
        eps=eps,
        residuals={"alpha_rms": alpha_rms, **env.residuals},
        reference_curve=reference,
    )
    _assert_bracketing(model, radii, profile.volumes[:, sel])
    _assert_concavity(model)
    logger.info(
        "fitted %s model on %s: alpha=%.4f params=%s c_l=%.4g c_u=%.4g window=[%.4g, %.4g]",
        family, profile.network_name, alpha, model.params, model.c_l, model.c_u, r_min, r_max,
    )
    return model


def _assert_bracketing(model: FluctuationModel, radii: np.ndarray, volumes: np.ndarray) -> None:
    lower = model.c_l * model.V_l(radii)
    upper = model.c_u * model.V_u(radii)
    tol = 1e-9
    if np.any(volumes < lower * (1 - tol)) or np.any(volumes > upper * (1 + tol)):
        raise NumericalInvariantError("fitted envelopes do not bracket the volume profile")


def concavity_margins(model: FluctuationModel, points: int = 64) -> dict[str, np.ndarray]:
    """
    s = ln r の格子 [ln r0 - ln 1000, ln r0] で F = exp(ψ) の凹性の余裕 ψ'' + ψ'^2 - ψ' を返す（<= 0 で凹）。
    ψ は (1/b) log f_l と -(1/b) log f_u。両端の格子点は除く。
    """
    s = np.linspace(model.log_r0 - math.log(1e3), model.log_r0, points)
    log_lo, log_hi = _family_log_curves(model.family, s, math.log(model.r_ref), model.delta, model.a1, model.a2)
    margins: dict[str, np.ndarray] = {}
    for name, psi in (("f_l^(1/b)", log_lo / model.b), ("f_u^(-1/b)", -log_hi / model.b)):
        d1 = np.gradient(psi, s)
        d2 = np.gradient(d1, s)
        margins[name] = (d2 + d1**2 - d1)[1:-1]
    return margins


def _assert_concavity(model: FluctuationModel) -> None:
    """
    f_l^{1/b} と f_u^{-1/b} が [0, r0] で凹であることを対数座標の差分で確かめる。
    """
    if model.b <= 0.0 or model.family == "uniform":
        return
    for name, margin in concavity_margins(model).items():
        if not np.all(np.isfinite(margin)):
            raise NumericalInvariantError(f"{name} concavity margin is not finite")
        scale = max(float(np.max(np.abs(margin))), 1.0)
        if np.any(margin > 1e-6 * scale):
            raise NumericalInvariantError(f"{name} is not concave on [0, r0] (r0 = exp({model.log_r0:.6g}))")


@dataclass(frozen=True)
class ScaleFunctions:
    """
    h(r) = r V(r), h_l = r V_l, h_u = r V_u, q(r) = c_q g(r)^{2 γ1} V_u(r) と、その単調逆関数。
    """

    model: FluctuationModel
    gamma1: float

    def h(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r * self.model.V(r)

    def h_l(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r * self.model.V_l(r)

    def h_u(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r * self.model.V_u(r)

    def q(self, r: np.ndarray | float) -> np.ndarray:
        return self.model.c_q * self.model.g(r) ** (2.0 * self.gamma1) * self.model.V_u(r)

    def h_inv(self, t: np.ndarray | float) -> np.ndarray:
        return monotone_inverse(self.h, t, self.model.r_ref)

    def h_l_inv(self, t: np.ndarray | float) -> np.ndarray:
        return monotone_inverse(self.h_l, t, self.model.r_ref)

    def h_u_inv(self, t: np.ndarray | float) -> np.ndarray:
        return monotone_inverse(self.h_u, t, self.model.r_ref)

    def q_inv(self, t: np.ndarray | float) -> np.ndarray:
        return monotone_inverse(self.q, t, self.model.r_ref)

    def V_inv(self, v: np.ndarray | float) -> np.ndarray:
        return self.model.V_inv(v)


def monotone_inverse(fn: Callable[[np.ndarray], np.ndarray], values: np.ndarray | float, anchor: float) -> np.ndarray:
    """
    狭義増加関数 fn の逆関数を対数スケールの二分法で一括計算する（相対精度 1e-12 以上）。
    """
    target = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(target <= 0) or not np.all(np.isfinite(target)):
        raise ValueError("monotone inverse needs finite positive values")
    lo = np.full(target.shape, anchor)
    hi = np.full(target.shape, anchor)
    for _ in range(400):
        low_bad = fn(lo) > target
        high_bad = fn(hi) < target
        if not (low_bad.any() or high_bad.any()):
            break
        lo = np.where(low_bad, lo / 16.0, lo)
        hi = np.where(high_bad, hi * 16.0, hi)
    else:
        raise ValueError("could not bracket the inverse")
    for _ in range(_BISECTION_STEPS):
        mid = np.sqrt(lo * hi)
        below = fn(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi / lo - 1.0 < _BISECTION_RTOL):
            break
    out = np.sqrt(lo * hi)
    return out if np.ndim(values) else out[0]


def eval_scale(model: FluctuationModel, gamma1: Optional[float] = None) -> ScaleFunctions:
    gamma1 = 3.0 + 2.0 * model.b + 2.0 * model.beta_u if gamma1 is None else float(gamma1)
    scale = ScaleFunctions(model=model, gamma1=gamma1)
    grid = np.geomspace(model.r_min / 10.0, model.r_max * 10.0, 400)
    for name in ("h", "h_l", "h_u", "q"):
        values = getattr(scale, name)(grid)
        if np.any(np.diff(values) <= 0):
            raise NumericalInvariantError(f"{name} is not strictly increasing on the model window")
    return scale


@dataclass(frozen=True)
class ScalingCheck:
    name: str
    inequality: str
    constant: float
    holds: bool
    witness: dict[str, float]
    unit_ratio: float
    limit: float = math.inf

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "inequality": self.inequality,
            "constant": self.constant,
            "holds": self.holds,
            "witness": dict(self.witness),
            "unit_ratio": self.unit_ratio,
            "limit": self.limit,
        }


@dataclass(frozen=True)
class ScalingReport:
    checks: tuple[ScalingCheck, ...]

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.checks)

    def __getitem__(self, name: str) -> ScalingCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def raise_for_violations(self) -> None:
        for check in self.checks:
            if not check.holds:
                raise ScalingViolationError(check.inequality, check.witness)

    def as_dict(self) -> dict[str, Any]:
        return {"all_hold": self.all_hold, "checks": [c.as_dict() for c in self.checks]}


def _extreme(ratio: np.ndarray, factors: np.ndarray, radii: np.ndarray, kind: str, factor_name: str) -> tuple[float, dict[str, float]]:
    idx = np.unravel_index(int(np.argmax(ratio) if kind == "max" else np.argmin(ratio)), ratio.shape)
    return float(ratio[idx]), {factor_name: float(factors[idx[0]]), "r": float(radii[idx[1]])}


def scaling_checks(
    model: FluctuationModel,
    radii: Optional[np.ndarray] = None,
    big: Optional[np.ndarray] = None,
    small: Optional[np.ndarray] = None,
    slack: float = 0.05,
) -> ScalingReport:
    """
    体積の倍化/反倍化・f_l, f_u の凹性評価・g の評価・包絡線の倍化をグリッド上で確かめる。

    各比の最もきつい値（constant）を、モデルから決まる上限/下限（limit）と比べる。
    - C_u, C_l: 窓上の sup / inf V(2r)/V(r)
    - f_l(r0), f_u(r0), g(r0): 凹性の半径 r0 での値（窓の上端では 1）
    witness は最もきつい (倍率, r)。
    """
    r = np.geomspace(model.r_min, model.r_max, 25) if radii is None else np.asarray(radii, dtype=float)
    big_l = np.geomspace(1.0, 10.0, 15) if big is None else np.asarray(big, dtype=float)
    small_l = np.geomspace(0.01, 1.0, 15) if small is None else np.asarray(small, dtype=float)
    lam_big, rr_big = np.meshgrid(big_l, r, indexing="ij")
    lam_small, rr_small = np.meshgrid(small_l, r, indexing="ij")
    b, bu, bl = model.b, model.beta_u, model.beta_l
    c_u, c_l = model.doubling_constant, model.anti_doubling_constant
    log_fl0, log_fu0 = model.log_f_at_r0()
    fl0, fu0, g0 = math.exp(log_fl0), math.exp(log_fu0), math.exp(log_fl0 - log_fu0)
    upper, lower = 1.0 + slack, 1.0 - slack

    checks: list[ScalingCheck] = []

    def add(name: str, inequality: str, ratio: np.ndarray, factors: np.ndarray, factor_name: str, kind: str, limit: float, unit: float) -> None:
        c, w = _extreme(ratio, factors, r, kind, factor_name)
        holds = c <= limit * upper if kind == "max" else c >= limit * lower
        checks.append(ScalingCheck(name, inequality, c, bool(np.isfinite(c) and holds), w, unit, limit))

    ratio = model.V(lam_big * rr_big) / (lam_big**bu * model.V(rr_big))
    add("volume_doubling", "V(Λr) <= C_u Λ^β_u V(r)", ratio, big_l, "Lambda", "max", c_u, float(ratio[0, 0]))

    ratio = model.V(lam_small * rr_small) / (lam_small**bl * model.V(rr_small))
    add("volume_anti_doubling", "V(λr) <= C_l λ^β_l V(r)", ratio, small_l, "lambda", "max", c_l, float(ratio[-1, 0]))

    ratio = model.f_l(lam_small * rr_small) / (lam_small**b * model.f_l(rr_small))
    add("concave_f_l", "f_l(λr) >= f_l(r0) λ^b f_l(r)", ratio, small_l, "lambda", "min", fl0, float(ratio[-1, 0]))

    ratio = model.f_u(lam_small * rr_small) / (lam_small ** (-b) * model.f_u(rr_small))
    add("concave_f_u", "f_u(λr) <= f_u(r0) λ^-b f_u(r)", ratio, small_l, "lambda", "max", fu0, float(ratio[-1, 0]))

    ratio = model.g(lam_small * rr_small) / (lam_small ** (2 * b) * model.g(rr_small))
    add("g_bound", "g(λr) >= g(r0) λ^2b g(r)", ratio, small_l, "lambda", "min", g0, float(ratio[-1, 0]))

    ratio = model.V_u(lam_big * rr_big) / (lam_big**bu * model.V_u(rr_big))
    add("upper_envelope_doubling", "V_u(Λr) <= C_u Λ^β_u V_u(r)", ratio, big_l, "Lambda", "max", c_u, float(ratio[0, 0]))

    ratio = model.V_l(lam_small * rr_small) / (lam_small ** (b + bu) * model.V_l(rr_small))
    add(
        "lower_envelope_growth", "V_l(λr) >= (f_l(r0)/C_u) λ^(b+β_u) V_l(r)",
        ratio, small_l, "lambda", "min", fl0 / c_u, float(ratio[-1, 0]),
    )

    # g(r)^{-1} = O(r^{-2ε}): 窓内（r <= r_ref/e）での経験指数。対数族は漸近的にしか満たさない
    inner = r[r <= model.r_ref / math.e]
    if inner.size:
        decay = np.log(1.0 / model.g(inner)) / np.log(model.r_ref / inner)
        k = int(np.argmax(decay))
        value, witness = float(decay[k]), {"r": float(inner[k])}
    else:
        value, witness = 0.0, {}
    holds = value <= 2.0 * model.eps + slack or model.family == "logarithmic"
    checks.append(ScalingCheck("g_decay", "log g^-1 / log(1/r) <= 2ε", value, bool(holds), witness, 0.0, 2.0 * model.eps))

    report = ScalingReport(checks=tuple(checks))
    logger.debug("scaling checks: %s", {c.name: (round(c.constant, 6), c.holds) for c in checks})
    return report
