from __future__ import annotations

import math

import numpy as np
import pytest

from heatkernels.exceptions import FitError, ScalingViolationError
from heatkernels.generators import gen_path, gen_star
from heatkernels.resistance import resistance_metric
from heatkernels.volume import (
    FluctuationModel,
    concavity_margins,
    eval_scale,
    fit_envelopes,
    fit_model,
    interior_window,
    monotone_envelopes,
    monotone_inverse,
    radius_grid,
    scaling_checks,
    volume_profile,
)


def test_radius_grid_uses_attained_values():
    metric = resistance_metric(gen_path(10))
    grid = radius_grid(metric)
    assert grid[:-1] == pytest.approx([float(k) for k in range(1, 10)])
    assert grid[-1] > metric.diameter


def test_radius_grid_is_thinned():
    metric = resistance_metric(gen_path(300))
    grid = radius_grid(metric, max_radii=20)
    assert grid.size <= 21
    assert np.all(np.diff(grid) > 0)


def test_profile_is_monotone_and_saturates():
    net = gen_path(12)
    metric = resistance_metric(net)
    profile = volume_profile(net, metric)
    assert np.all(np.diff(profile.volumes, axis=1) >= 0)
    assert np.allclose(profile.volumes[:, -1], net.total_mass)
    frame = profile.to_frame()
    assert list(frame.columns) == ["vertex", "r", "V"]
    assert len(frame) == net.n * profile.radii.size


def test_path_volume_exponent_is_one(path101):
    _, _, _, model = path101
    assert model.alpha == pytest.approx(1.0, abs=0.05)
    assert model.family == "uniform"
    assert model.b == 0.0 and model.eps == 0.0
    assert model.c_l <= 1.0 <= model.c_u


def test_fitted_envelopes_bracket_the_profile(path101):
    _, _, profile, model = path101
    sel = (profile.radii >= model.r_min) & (profile.radii <= model.r_max)
    r = profile.radii[sel]
    v = profile.volumes[:, sel]
    assert np.all(v >= model.c_l * model.V_l(r) * (1 - 1e-9))
    assert np.all(v <= model.c_u * model.V_u(r) * (1 + 1e-9))


@pytest.mark.parametrize("family", ["polynomial", "logarithmic"])
def test_other_families_keep_the_ordering(path101, family):
    _, _, profile, _ = path101
    model = fit_model(profile, family)
    r = np.geomspace(model.r_min, model.r_max, 9)
    assert np.all(model.f_l(r) <= 1.0 + 1e-12)
    assert np.all(model.f_u(r) >= 1.0 - 1e-12)
    assert np.all(np.diff(model.f_l(r)) >= -1e-12)
    assert np.all(np.diff(model.f_u(r)) <= 1e-12)


def test_gasket_volume_exponent(gasket5):
    _, _, _, model = gasket5
    # ln 3 / ln(5/3) ≈ 2.1507
    assert model.alpha == pytest.approx(2.1507, abs=0.1)


def test_narrow_grid_is_rejected():
    net = gen_star(6)
    metric = resistance_metric(net)
    with pytest.raises(FitError, match="too-narrow"):
        fit_model(volume_profile(net, metric))


def test_interior_window_drops_the_top():
    radii = np.arange(1.0, 11.0)
    assert interior_window(radii) == (2.0, 8.0)


def test_monotone_envelopes_do_not_cross_the_data():
    lower = np.array([0.5, 0.3, 0.6, 0.4, 0.9])
    upper = np.array([2.0, 2.5, 1.5, 1.7, 1.1])
    lo, hi = monotone_envelopes(lower, upper)
    assert np.all(lo <= lower) and np.all(np.diff(lo) >= 0)
    assert np.all(hi >= upper) and np.all(np.diff(hi) <= 0)


def test_polynomial_envelope_recovers_delta():
    r = np.geomspace(0.01, 1.0, 30)
    fit = fit_envelopes(r, r**0.2, r**-0.2, "polynomial", r_ref=1.0)
    assert fit.delta == pytest.approx(0.2, rel=1e-6)
    assert fit.c_l == pytest.approx(1.0, rel=1e-6)
    assert fit.c_u == pytest.approx(1.0, rel=1e-6)


def test_monotone_inverse_round_trip():
    fn = lambda r: r**2.5 + r  # noqa: E731
    values = np.array([1e-6, 0.3, 7.0, 1e5])
    r = monotone_inverse(fn, values, anchor=1.0)
    assert np.allclose(fn(r), values, rtol=1e-10)


def test_scale_functions_for_a_plain_power_law():
    model = FluctuationModel(alpha=2.0, scale=1.0, r_min=0.1, r_max=10.0, r_ref=10.0)
    scale = eval_scale(model)
    assert scale.gamma1 == pytest.approx(7.0)
    assert float(scale.h(2.0)) == pytest.approx(8.0)
    assert float(scale.h_inv(8.0)) == pytest.approx(2.0, rel=1e-10)
    assert float(scale.V_inv(9.0)) == pytest.approx(3.0)


def test_power_law_passes_the_scaling_checks():
    model = FluctuationModel(alpha=1.5, scale=2.0, r_min=0.1, r_max=10.0, r_ref=10.0)
    report = scaling_checks(model)
    assert report.all_hold
    assert report["volume_doubling"].constant == pytest.approx(1.0)
    report.raise_for_violations()


def test_scaling_violation_carries_a_witness():
    model = FluctuationModel(
        alpha=1.0, scale=1.0, family="polynomial", delta=0.3, b=0.01, eps=0.01, r_min=0.01, r_max=1.0, r_ref=1.0
    )
    report = scaling_checks(model)
    assert not report["g_decay"].holds
    with pytest.raises(ScalingViolationError) as info:
        report.raise_for_violations()
    assert "r" in info.value.witness


def test_model_round_trips_through_its_dict(path101):
    _, _, _, model = path101
    again = FluctuationModel.from_dict(model.as_dict())
    assert again.alpha == model.alpha
    assert again.r_ref == model.r_ref
    assert math.isclose(again.c_u, model.c_u)
    assert again.log_r0 == model.log_r0
    assert again.reference_curve == model.reference_curve


def test_midline_is_the_default_reference_curve(path101):
    _, _, profile, model = path101
    assert model.reference_curve == "midline"
    mid = profile.midline_curve
    assert np.all(profile.inf_envelope <= mid * (1 + 1e-12))
    assert np.all(mid <= profile.sup_envelope * (1 + 1e-12))
    median = fit_model(profile, reference="median")
    assert median.reference_curve == "median"
    assert median.alpha != model.alpha
    assert median.alpha == pytest.approx(1.0, abs=0.1)


def test_reference_curve_comes_from_settings(path101, settings):
    _, _, profile, _ = path101
    settings.HEATKERNELS = {**settings.HEATKERNELS, "VOLUME_REFERENCE_CURVE": "median"}
    model = fit_model(profile)
    assert model.reference_curve == "median"
    assert model.alpha == pytest.approx(fit_model(profile, reference="median").alpha)


def test_unknown_reference_curve(path101):
    _, _, profile, _ = path101
    with pytest.raises(ValueError, match="reference curve"):
        fit_model(profile, reference="mean")


def test_upper_exponent_is_capped():
    r = np.geomspace(0.01, 1.0, 30)
    ell = 1.0 + np.log(1.0 / r)
    fit = fit_envelopes(r, ell**-1.0, ell**3.0, "logarithmic", r_ref=1.0, max_exponent=1.5)
    assert fit.a1 == pytest.approx(1.0, rel=1e-6)
    assert fit.a2 == pytest.approx(1.5)
    assert np.all(ell**3.0 <= fit.c_u * ell**1.5 * (1 + 1e-12))


def test_logarithmic_fit_on_a_weighted_tree(tree3):
    _, _, _, model = tree3
    assert model.family == "logarithmic"
    assert 0.0 < model.a2 <= model.alpha
    eval_scale(model)
    assert scaling_checks(model).all_hold


def test_concavity_radius_stays_finite(tree3):
    _, _, _, model = tree3
    assert math.isfinite(model.log_r0)
    assert model.log_r0 < math.log(model.r_ref) - 1.0
    margins = concavity_margins(model)
    for margin in margins.values():
        assert margin.size > 0 and np.all(np.isfinite(margin))
        assert np.all(margin <= 1e-6 * max(float(np.max(np.abs(margin))), 1.0))
    # 区間は空でなく、少なくとも一方の曲線は非自明に曲がっている
    assert max(float(np.max(np.abs(m))) for m in margins.values()) > 0.0


def test_concavity_fails_above_the_concavity_radius():
    model = FluctuationModel(
        alpha=1.5, scale=1.0, family="logarithmic", a1=2.0, a2=1.0, b=0.01, eps=0.01,
        r_min=1.0, r_max=10.0, r_ref=10.0, log_r0=math.log(10.0),
    )
    assert np.max(concavity_margins(model)["f_l^(1/b)"]) > 0.0


def test_infinite_concavity_radius_is_rejected():
    with pytest.raises(FitError, match="log_r0"):
        FluctuationModel(alpha=1.0, scale=1.0, log_r0=-math.inf)


def test_non_doubling_model_is_caught():
    model = FluctuationModel(
        alpha=1.0, scale=1.0, beta_upper=0.5, r_min=0.1, r_max=10.0, r_ref=10.0, log_r0=math.log(10.0)
    )
    check = scaling_checks(model)["volume_doubling"]
    assert not check.holds
    assert check.limit == pytest.approx(2.0)
    assert check.constant == pytest.approx(math.sqrt(10.0))
    assert check.witness["Lambda"] == pytest.approx(10.0)


def test_steep_lower_envelope_breaks_concavity():
    model = FluctuationModel(
        alpha=1.0, scale=1.0, family="polynomial", delta=0.3, b=0.01, eps=0.01, r_min=0.01, r_max=1.0, r_ref=1.0
    )
    check = scaling_checks(model)["concave_f_l"]
    assert not check.holds
    assert check.limit == pytest.approx(1.0)
    assert check.constant == pytest.approx(0.01**0.29)
    assert check.witness["lambda"] == pytest.approx(0.01)
