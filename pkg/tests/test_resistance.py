from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatkernels.exceptions import InvalidRadiusError, NoComplementError, OverlappingSetsError
from heatkernels.generators import gen_path, gen_star
from heatkernels.network import build_network, dirichlet_energy
from heatkernels.resistance import (
    chaining_probe,
    effective_resistance,
    escape_resistance,
    greedy_cover,
    probe_chaining,
    resistance_ball,
    resistance_metric,
)

from .conftest import networks, two_state_spec


def test_single_edge_resistance_is_inverse_conductance():
    net = build_network(two_state_spec(1.0, 1.0, 4.0))
    assert effective_resistance(net, [0], [1]) == pytest.approx(0.25)


def test_triangle_resistance(triangle):
    assert effective_resistance(triangle, [0], [1]) == pytest.approx(2 / 3)
    metric = resistance_metric(triangle)
    assert metric(0, 2) == pytest.approx(2 / 3)


def test_star_leaves_are_two_apart():
    metric = resistance_metric(gen_star(5))
    assert metric(1, 4) == pytest.approx(2.0)
    assert metric.center == 0
    assert metric.diameter == pytest.approx(2.0)


def test_overlapping_sets(triangle):
    with pytest.raises(OverlappingSetsError):
        effective_resistance(triangle, [0, 1], [1, 2])


def test_ball_is_strict_and_connected():
    metric = resistance_metric(gen_path(10))
    ball = resistance_ball(metric, 5, 3.0)
    assert ball.members == (3, 4, 5, 6, 7)
    assert ball.volume == pytest.approx(5.0)
    assert 5 in ball and 8 not in ball


def test_balls_exclude_vertices_at_exactly_the_radius():
    metric = resistance_metric(gen_path(21))
    for r in range(1, 9):
        assert len(resistance_ball(metric, 10, float(r)).members) == 2 * r - 1


@pytest.mark.parametrize("radius", [0.0, -1.0, float("nan")])
def test_ball_radius_must_be_positive(radius):
    metric = resistance_metric(gen_path(4))
    with pytest.raises(InvalidRadiusError):
        resistance_ball(metric, 0, radius)


def test_escape_resistance_on_a_path():
    net = gen_path(21)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 10, 4.0)
    # 両側に長さ 4 の直列抵抗が並列
    assert escape_resistance(net, ball, metric) == pytest.approx(2.0)


def test_escape_from_the_whole_network():
    net = gen_path(5)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 2, metric.diameter * 2)
    with pytest.raises(NoComplementError):
        escape_resistance(net, ball)


def test_greedy_cover_separates_and_covers():
    metric = resistance_metric(gen_path(41))
    cover = greedy_cover(metric, 20, 10.0, 0.25)
    centers = np.array(cover.centers)
    assert cover.size >= 2
    assert np.all(np.diff(centers) >= 2.5)
    members = resistance_ball(metric, 20, 10.0).member_array()
    assert np.all(metric.matrix[np.ix_(centers, members)].min(axis=0) < 2.5)


def test_greedy_cover_rejects_large_shrink_factor():
    metric = resistance_metric(gen_path(5))
    with pytest.raises(InvalidRadiusError):
        greedy_cover(metric, 2, 2.0, 0.75)


def test_chaining_probe_on_a_path_is_tight():
    metric = resistance_metric(gen_path(13))
    probe = chaining_probe(metric, 0, 12, 4)
    assert probe.chain[0] == 0 and probe.chain[-1] == 12
    assert probe.n == 4
    assert probe.max_step == pytest.approx(3.0)
    assert probe.constant == pytest.approx(1.0)


def test_probe_chaining_passes_on_a_path():
    report = probe_chaining(resistance_metric(gen_path(30)))
    assert report.passed
    assert report.worst_constant < 2.0 + 1e-9


@settings(max_examples=30, deadline=None)
@given(net=networks(min_vertices=3))
def test_resistance_is_a_metric(net):
    r = resistance_metric(net).matrix
    assert np.allclose(r, r.T)
    assert np.allclose(np.diag(r), 0.0)
    assert np.all(r[~np.eye(net.n, dtype=bool)] > 0)
    # 三角不等式
    assert np.all(r[:, None, :] <= r[:, :, None] + r[None, :, :] + 1e-9)


@settings(max_examples=30, deadline=None)
@given(net=networks())
def test_metric_agrees_with_the_variational_resistance(net):
    metric = resistance_metric(net)
    assert effective_resistance(net, [0], [net.n - 1]) == pytest.approx(metric(0, net.n - 1), rel=1e-8)


def test_chains_may_skip_over_vertices():
    metric = resistance_metric(gen_path(13))
    probe = chaining_probe(metric, 0, 12, 2)
    assert probe.chain == (0, 6, 12)
    assert probe.constant == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(net=networks(), edge=st.integers(min_value=0, max_value=100), factor=st.floats(min_value=1.0, max_value=20.0))
def test_raising_a_conductance_never_raises_resistance(net, edge, factor):
    spec = net.to_dict()
    spec["edges"][edge % net.m]["conductance"] *= factor
    before = resistance_metric(net).matrix
    after = resistance_metric(build_network(spec)).matrix
    assert np.all(after <= before * (1.0 + 1e-9) + 1e-12)


@settings(max_examples=30, deadline=None)
@given(net=networks(), seed=st.integers(min_value=0, max_value=2**16))
def test_resistance_bounds_every_oscillation(net, seed):
    f = np.random.default_rng(seed).normal(size=net.n)
    r = resistance_metric(net).matrix
    energy = dirichlet_energy(net, f)
    diff2 = (f[:, None] - f[None, :]) ** 2
    assert np.all(diff2 <= r * energy * (1.0 + 1e-9) + 1e-12)


@settings(max_examples=30, deadline=None)
@given(net=networks(min_vertices=3), x=st.integers(min_value=0, max_value=100), data=st.data())
def test_resistance_balls_are_nested(net, x, data):
    metric = resistance_metric(net)
    x %= net.n
    radii = sorted(data.draw(st.lists(st.sampled_from(metric.distinct_values.tolist()), min_size=2, max_size=4)))
    balls = [set(resistance_ball(metric, x, r).members) for r in radii]
    for small, big in zip(balls, balls[1:]):
        assert small <= big
