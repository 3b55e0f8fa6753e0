from __future__ import annotations

import numpy as np
import pytest

from heatkernels.bounds import (
    attained_radii,
    certify_exit_tail,
    certify_exit_times,
    certify_fluctuations,
    certify_local,
    certify_neardiag,
    certify_offdiag,
    certify_ondiag,
    chain_count,
    derive_exponents,
    escape_profile,
    exit_samples,
    grid_vertices,
    predicted_exponents,
)
from heatkernels.exceptions import HypothesesNotMetError, InfeasibleExponentsError
from heatkernels.generators import gen_dendrite
from heatkernels.heat import spectral_decompose, time_grid
from heatkernels.resistance import probe_chaining, resistance_metric
from heatkernels.volume import FluctuationModel, eval_scale, fit_model, volume_profile


@pytest.fixture
def quadratic_model() -> FluctuationModel:
    return FluctuationModel(alpha=2.0, scale=1.0, r_min=0.1, r_max=10.0, r_ref=10.0)


@pytest.fixture(scope="module")
def path_setup(path101):
    net, metric, profile, model = path101
    dec = spectral_decompose(net)
    times = time_grid(eval_scale(model))
    return net, metric, profile, model, dec, times


def test_closed_form_exponents(quadratic_model):
    exps = derive_exponents(quadratic_model, "ondiag", policy="closed-form")
    assert exps.gamma1 == pytest.approx(7.0)
    assert exps.theta1 == pytest.approx(64.0)
    assert exps.theta3 == pytest.approx(14.0)
    assert exps.theta1_lower == pytest.approx(28.0)
    assert exps.theta2 == pytest.approx(128.0)
    assert exps.theta2_exceeds_theta1


def test_margin_exponents_sit_above_the_lower_bound(quadratic_model):
    exps = derive_exponents(quadratic_model, "offdiag", slack=0.1)
    assert exps.theta1 == pytest.approx(28.0 * 1.1)
    assert exps.theta2 > exps.theta2_lower
    assert exps.as_dict()["theta1_window"][0] == pytest.approx(28.0)


def test_large_fluctuation_exponent_is_infeasible():
    model = FluctuationModel(alpha=2.0, scale=1.0, family="polynomial", delta=0.2, b=0.2, eps=0.2)
    with pytest.raises(InfeasibleExponentsError) as info:
        derive_exponents(model, "ondiag")
    assert info.value.exit_status == 11


def test_offdiag_cap_is_tighter_than_ondiag():
    model = FluctuationModel(alpha=2.0, scale=1.0, family="polynomial", delta=0.03, b=0.03, eps=0.03)
    derive_exponents(model, "ondiag")
    with pytest.raises(InfeasibleExponentsError):
        derive_exponents(model, "offdiag")


def test_predicted_power(quadratic_model):
    exps = derive_exponents(quadratic_model)
    assert predicted_exponents(quadratic_model, exps)["ondiag_power"] == pytest.approx(-2 / 3)


def test_grid_helpers(path101):
    _, metric, _, _ = path101
    verts = grid_vertices(101, count=5, include=metric.center)
    assert verts.tolist() == [0, 25, 50, 75, 100]
    radii = attained_radii(metric, 2.0, 30.0, count=4)
    assert radii.size <= 4
    assert radii.min() >= 2.0 and radii.max() <= 30.0


def test_ondiag_certificate_on_a_path(path_setup):
    net, metric, _, model, dec, times = path_setup
    cert = certify_ondiag(dec, model, derive_exponents(model), metric=metric, times=times)
    assert cert.holds
    assert 0 < cert.constants["c1"] <= cert.constants["c2"]
    assert cert.metrics["slope"] == pytest.approx(-0.5, abs=0.05)
    assert cert.as_dict()["bound_id"] == "ondiag"


def test_exit_time_certificate_on_a_path(path_setup):
    net, metric, _, model, _, times = path_setup
    samples = exit_samples(net, metric, model, times)
    assert samples
    cert = certify_exit_times(net, metric, model, samples=samples)
    assert cert.holds
    assert cert.constants["c_lo"] <= cert.constants["c_up"]


def test_exit_tail_certificate_on_a_path(path_setup):
    net, metric, _, model, _, times = path_setup
    exps = derive_exponents(model, "offdiag")
    cert = certify_exit_tail(net, metric, model, exps, times=times)
    assert cert.holds
    assert cert.constants["c1"] == 1.0


def test_neardiag_certificate_on_a_path(path_setup):
    _, metric, _, model, dec, times = path_setup
    cert = certify_neardiag(dec, metric, model, derive_exponents(model, "offdiag"), times=times)
    assert cert.holds
    assert cert.grid["pairs_included"] > 0


def test_offdiag_certificate_on_a_path(path_setup):
    _, metric, _, model, dec, times = path_setup
    exps = derive_exponents(model, "offdiag")
    chaining = probe_chaining(metric)
    cert = certify_offdiag(dec, metric, model, exps, chaining=chaining, times=times)
    assert cert.constants["c2"] > 0
    assert cert.metrics["lower_bound"] == "holds"
    assert cert.holds


def test_offdiag_lower_bound_needs_chaining(path_setup):
    _, metric, _, model, dec, times = path_setup
    cert = certify_offdiag(dec, metric, model, derive_exponents(model, "offdiag"), chaining=None, times=times)
    assert cert.metrics["lower_bound"] == "skipped"


def test_chain_count_grows_as_time_shrinks(path_setup):
    _, metric, _, model, _, times = path_setup
    exps = derive_exponents(model, "offdiag")
    long = chain_count(metric, model, exps, 40, 60, float(times[-1]))
    short = chain_count(metric, model, exps, 40, 60, float(times[len(times) // 2]))
    assert short.N >= long.N >= 1
    assert short.chain[0] == 40 and short.chain[-1] == 60
    assert len(short.steps) == short.N


def test_fluctuation_certificate_on_a_path(path_setup):
    _, _, profile, model, dec, times = path_setup
    cert = certify_fluctuations(dec, profile, model, derive_exponents(model), times=times)
    assert cert.holds
    assert cert.metrics["degenerate"] is True
    lo, hi = cert.metrics["separation_range"]
    assert 1.0 <= lo <= hi


def test_fluctuation_hypotheses_can_fail(path_setup, settings):
    _, _, profile, model, dec, times = path_setup
    settings.HEATKERNELS = {**settings.HEATKERNELS, "HYPOTHESIS_MAX_SPREAD": 1.0}
    with pytest.raises(HypothesesNotMetError):
        certify_fluctuations(dec, profile, model, derive_exponents(model), times=times)


def test_escape_profile_at_the_centre(path_setup):
    net, metric, _, model, _, _ = path_setup
    frame = escape_profile(net, metric, model, metric.center, radii=[4.0, 10.0])
    assert frame["escape"].tolist() == pytest.approx([2.0, 5.0])
    assert frame["ratio"].tolist() == pytest.approx([0.5, 0.5])


def test_local_certificate(path_setup):
    _, metric, profile, model, dec, times = path_setup
    cert = certify_local(dec, metric, profile, model, metric.center, times=times)
    assert cert.holds
    assert cert.metrics["local_envelope"]["vertex"] == metric.center


def test_local_hypothesis_floor(path_setup, settings):
    _, metric, profile, model, dec, times = path_setup
    settings.HEATKERNELS = {**settings.HEATKERNELS, "RESCOND_FLOOR": 0.9}
    with pytest.raises(HypothesesNotMetError):
        certify_local(dec, metric, profile, model, metric.center, times=times)


def test_certificates_are_deterministic(path_setup):
    _, metric, _, model, dec, times = path_setup
    exps = derive_exponents(model)
    a = certify_ondiag(dec, model, exps, metric=metric, times=times).as_dict()
    b = certify_ondiag(dec, model, exps, metric=metric, times=times).as_dict()
    assert a == b
    assert np.isfinite(a["constants"]["c2"])


@pytest.fixture(scope="module")
def gasket_setup(gasket5):
    net, metric, profile, model = gasket5
    dec = spectral_decompose(net)
    times = time_grid(eval_scale(model))
    return net, metric, profile, model, dec, times


@pytest.mark.parametrize("setup", ["path_setup", "gasket_setup"])
def test_ondiag_spread_is_bounded(setup, request):
    _, metric, _, model, dec, times = request.getfixturevalue(setup)
    cert = certify_ondiag(dec, model, derive_exponents(model), metric=metric, times=times)
    assert cert.holds
    assert cert.metrics["spread"] <= 50.0


@pytest.mark.parametrize("setup", ["path_setup", "gasket_setup"])
def test_exit_time_spread_is_bounded(setup, request):
    net, metric, _, model, _, times = request.getfixturevalue(setup)
    cert = certify_exit_times(net, metric, model, samples=exit_samples(net, metric, model, times))
    assert cert.holds
    assert cert.metrics["spread"] <= 50.0


def test_closed_form_second_exponent_with_fluctuations():
    model = FluctuationModel(alpha=2.0, scale=1.0, family="polynomial", delta=0.01, b=0.01, eps=0.01)
    exps = derive_exponents(model, "ondiag", policy="closed-form")
    assert exps.theta1 == pytest.approx(64.0)
    assert exps.gamma1 == pytest.approx(7.02)
    assert exps.theta2 == pytest.approx(64.0 * 4.0 / (2.0 - 2.0 * 0.01 * 64.0))
    assert exps.theta2_lower == pytest.approx(64.0 * 3.0 / 0.72)
    assert exps.theta2 > exps.theta2_lower


def test_fluctuation_certificate_on_a_weighted_tree(tree3):
    net, _, profile, model = tree3
    dec = spectral_decompose(net)
    cert = certify_fluctuations(dec, profile, model, derive_exponents(model))
    assert cert.holds
    assert cert.metrics["degenerate"] is False
    assert cert.metrics["hypotheses"]["inf_spread"] <= 50.0
    lo, hi = cert.metrics["g_theta1_range"]
    assert 0.0 < lo <= hi <= 1.0
    assert set(cert.metrics["log10_ranges"]) <= set(cert.metrics["ranges"])


def test_offdiag_shape_on_a_path(path_setup):
    _, metric, _, model, dec, times = path_setup
    cert = certify_offdiag(dec, metric, model, derive_exponents(model, "offdiag"), chaining=probe_chaining(metric), times=times)
    assert abs(cert.metrics["shape_correlation"]) >= 0.98
    assert cert.metrics["shape_slope"] < 0


def test_offdiag_certificate_on_a_dendrite():
    net = gen_dendrite(300, seed=1)
    metric = resistance_metric(net)
    model = fit_model(volume_profile(net, metric))
    chaining = probe_chaining(metric)
    assert chaining.passed
    cert = certify_offdiag(spectral_decompose(net), metric, model, derive_exponents(model, "offdiag"), chaining=chaining)
    assert cert.holds
    assert cert.metrics["lower_bound"] == "holds"
