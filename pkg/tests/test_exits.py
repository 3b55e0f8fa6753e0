from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings

from heatkernels.exceptions import NoComplementError, OutsideBallError
from heatkernels.exits import (
    exit_table,
    exit_tail,
    expected_exit_time,
    green_kernel,
    killed_spectrum,
    mean_exit_time_from_tail,
)
from heatkernels.generators import gen_path, gen_sierpinski, gen_star
from heatkernels.network import build_network
from heatkernels.resistance import escape_resistance, resistance_ball, resistance_metric

from .conftest import networks


def test_single_vertex_exit_is_exponential():
    net = gen_star(3)
    # 中心だけを殺す集合にすると脱出率は 次数 / μ = 3
    for t in (0.1, 0.5, 2.0):
        assert exit_tail(net, [0], 0, t) == pytest.approx(1 - math.exp(-3 * t), rel=1e-10)
    assert expected_exit_time(net, [0], 0) == pytest.approx(1 / 3)


@pytest.mark.parametrize("r", [2, 5, 10])
def test_path_exit_time_from_the_centre(r):
    net = gen_path(41)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 20, float(r))
    assert expected_exit_time(net, ball, 20) == pytest.approx(r * r / 2)


def test_green_diagonal_is_the_escape_resistance():
    net = gen_sierpinski(3)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 7, 1.5)
    kernel = green_kernel(net, ball)
    assert kernel(7, 7) == pytest.approx(escape_resistance(net, ball), rel=1e-9)


def test_green_kernel_rows_outside_the_ball(triangle):
    kernel = green_kernel(triangle, [0, 1])
    row = kernel.row(0)
    assert row[2] == 0.0
    with pytest.raises(OutsideBallError):
        kernel(2, 0)


def test_killing_everything_has_no_complement(triangle):
    with pytest.raises(NoComplementError):
        green_kernel(triangle, [0, 1, 2])


def test_tail_is_a_distribution_function():
    net = gen_path(15)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 7, 4.0)
    tail = exit_tail(net, ball, 7, np.geomspace(0.01, 500.0, 30))
    assert np.all(np.diff(tail) >= -1e-12)
    assert tail[0] >= 0.0 and tail[-1] == pytest.approx(1.0, abs=1e-9)


def test_mean_from_tail_agrees_with_the_green_route():
    net = gen_sierpinski(3)
    metric = resistance_metric(net)
    ball = resistance_ball(metric, 7, 2.0)
    spectrum = killed_spectrum(net, ball)
    mean = expected_exit_time(net, ball, 7)
    assert mean_exit_time_from_tail(spectrum, 7) == pytest.approx(mean, rel=1e-6)
    assert spectrum.mean(7) == pytest.approx(mean, rel=1e-9)


def test_exit_table_skips_full_balls():
    net = gen_path(9)
    metric = resistance_metric(net)
    frame = exit_table(net, metric, [4], [2.0, 100.0], [1.0, 4.0])
    assert set(frame["r"]) == {2.0}
    assert list(frame.columns) == ["center", "r", "x", "E", "t", "tail"]
    assert len(frame) == 2


@settings(max_examples=30, deadline=None)
@given(net=networks(min_vertices=3))
def test_exit_time_routes_agree(net):
    # 最後の頂点を境界にする
    members = list(range(net.n - 1))
    mean = expected_exit_time(net, members, 0)
    kernel = green_kernel(net, members)
    assert mean == pytest.approx(float(kernel.occupation_mass()[0]), rel=1e-9)
    assert mean > 0


@settings(max_examples=30, deadline=None)
@given(net=networks(min_vertices=3))
def test_exit_time_grows_with_the_ball(net):
    means = [expected_exit_time(net, list(range(k)), 0) for k in range(1, net.n)]
    assert np.all(np.diff(means) >= -1e-10 * max(means))
