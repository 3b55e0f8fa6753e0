from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings as hsettings

from heatkernels.exceptions import DenseLimitError
from heatkernels.generators import gen_path, gen_sierpinski
from heatkernels.heat import (
    continuity_check,
    diagonal_volume_check,
    heat_kernel,
    heat_trace,
    kernel_diagonal,
    kernel_energy_check,
    kernel_matrix,
    kernel_samples_frame,
    semigroup_apply,
    spectral_decompose,
    time_grid,
    ultracontractivity_profile,
    weighted_norm,
)
from heatkernels.network import build_network
from heatkernels.resistance import resistance_metric
from heatkernels.volume import eval_scale

from .conftest import networks, two_state_spec


def test_two_state_eigenvalue():
    net = build_network(two_state_spec(2.0, 3.0, 1.5))
    dec = spectral_decompose(net)
    assert dec.eigenvalues[0] == 0.0
    assert dec.spectral_gap == pytest.approx(1.5 * (1 / 2.0 + 1 / 3.0))


def test_two_state_kernel_closed_form():
    mu1, mu2, c = 1.0, 4.0, 2.0
    dec = spectral_decompose(build_network(two_state_spec(mu1, mu2, c)))
    lam = c * (1 / mu1 + 1 / mu2)
    t = 0.7
    total = mu1 + mu2
    expected = 1 / total + (mu2 / mu1) / total * math.exp(-lam * t)
    assert heat_kernel(dec, t, 0, 0) == pytest.approx(expected, rel=1e-12)


def test_dense_limit_is_not_truncated(settings):
    settings.HEATKERNELS = {**settings.HEATKERNELS, "DENSE_SPECTRAL_LIMIT": 5}
    with pytest.raises(DenseLimitError):
        spectral_decompose(gen_path(6))


def test_kernel_tends_to_the_uniform_density():
    net = gen_path(8)
    dec = spectral_decompose(net)
    assert np.allclose(kernel_matrix(dec, 500.0), 1.0 / net.total_mass, atol=1e-10)


def test_trace_counts_the_spectrum(triangle):
    dec = spectral_decompose(triangle)
    # 三角形: 固有値 0, 3, 3
    assert heat_trace(dec, 0.5) == pytest.approx(1 + 2 * math.exp(-1.5))


def test_semigroup_conserves_mass(triangle):
    dec = spectral_decompose(triangle)
    f = np.array([1.0, 0.0, 0.0])
    g = semigroup_apply(dec, 0.3, f)
    assert weighted_norm(dec, g, p=1) == pytest.approx(1.0)
    assert np.array_equal(semigroup_apply(dec, 0.0, f), f)


def test_energy_of_the_kernel_is_bounded():
    dec = spectral_decompose(gen_path(15))
    for t in (0.1, 1.0, 10.0):
        report = kernel_energy_check(dec, t, 7)
        assert report.ratio <= 1.0


def test_diagonal_volume_bound(path101):
    net, _, profile, _ = path101
    check = diagonal_volume_check(spectral_decompose(net), profile)
    assert check.holds


def test_continuity_modulus():
    net = gen_path(9)
    dec = spectral_decompose(net)
    metric = resistance_metric(net)
    triples = [(0, y, t) for y in range(1, 9) for t in (0.2, 2.0, 20.0)]
    assert continuity_check(dec, metric, triples) <= 1.0


def test_ultracontractivity_is_stable(gasket5):
    net, _, _, model = gasket5
    dec = spectral_decompose(net)
    report = ultracontractivity_profile(dec, model)
    assert report.times.size == 40
    assert np.all(report.ratio > 0)
    assert report.variation < 1e3


def test_path_spectral_slope(path101):
    net, metric, _, model = path101
    dec = spectral_decompose(net)
    times = time_grid(eval_scale(model))
    lo, hi = times[0], times[-1]
    mid = math.sqrt(lo * hi)
    sel = (times >= mid / math.sqrt(10)) & (times <= mid * math.sqrt(10))
    diag = kernel_diagonal(dec, times[sel])[:, metric.center]
    slope = np.polyfit(np.log(times[sel]), np.log(diag), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_kernel_samples_frame(triangle):
    dec = spectral_decompose(triangle)
    frame = kernel_samples_frame(dec, [0.5, 1.0], [(0, 1), (1, 2)])
    assert list(frame.columns) == ["t", "x", "y", "p"]
    assert len(frame) == 4


def test_gasket_kernel_is_symmetric_and_positive():
    dec = spectral_decompose(gen_sierpinski(2))
    p = kernel_matrix(dec, 0.5)
    assert np.allclose(p, p.T)
    assert np.all(p > 0)


@hsettings(max_examples=30, deadline=None)
@given(net=networks())
def test_kernel_is_a_symmetric_sub_markov_density(net):
    dec = spectral_decompose(net)
    p = kernel_matrix(dec, 0.4)
    assert np.allclose(p, p.T, atol=1e-10)
    assert np.all(p >= -1e-10)
    assert np.allclose(p @ net.measure, 1.0, atol=1e-9)
    # Chapman-Kolmogorov
    q = kernel_matrix(dec, 0.8)
    assert np.allclose((p * net.measure) @ p, q, atol=1e-9)


def test_gasket_spectral_slope(gasket5):
    net, metric, _, model = gasket5
    dec = spectral_decompose(net)
    times = time_grid(eval_scale(model))
    mid = math.sqrt(times[0] * times[-1])
    sel = (times >= mid / math.sqrt(10)) & (times <= mid * math.sqrt(10))
    diag = kernel_diagonal(dec, times[sel])[:, metric.center]
    slope = np.polyfit(np.log(times[sel]), np.log(diag), 1)[0]
    # -d_s/2 = -ln 3 / ln 5
    assert slope == pytest.approx(-0.6826, abs=0.05)
