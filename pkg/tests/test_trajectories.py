import math

import numpy as np
import pytest

from bosegas.errors import ConfigurationError
from bosegas.streams import stream
from bosegas.trajectories import (
    Bridge,
    Loop,
    MarkTriple,
    SausageSpec,
    TimeGrid,
    bridge_from_noise,
    d_inf,
    reverse_bridge,
    sample_bridge,
    sausage_volume,
    standard_bridge_bank,
    standardize,
    time_shift,
    unfold,
    unit_ball_volume,
    unnormalized_mass,
)


def test_timegrid_basic():
    g = TimeGrid(0.5, 4)
    assert g.spacing == 0.125
    t = g.times()
    assert t[0] == 0.0 and t[-1] == 0.5 and len(t) == 5
    with pytest.raises(ValueError):
        TimeGrid(0.5, 1)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 4)


def test_bridge_endpoints_exact():
    rng = stream(1)
    x = np.array([0.3, -0.7])
    y = np.array([1.1, 0.4])
    b = sample_bridge(x, y, 0.7, 32, rng)
    assert np.array_equal(b.start, x)
    assert np.array_equal(b.end, y)
    assert b.nodes.shape == (33, 2)
    assert not b.nodes.flags.writeable


def test_bridge_rejects_bad_inputs():
    rng = stream(2)
    with pytest.raises(ValueError):
        sample_bridge(np.array([np.nan]), np.array([0.0]), 1.0, 8, rng)
    with pytest.raises(ValueError):
        sample_bridge(0.0, 0.0, -1.0, 8, rng)


def test_bridge_moments_match_analytic_law():
    # mean at s = 1/2 is the endpoint interpolation; variance is s(t-s)/t
    rng = stream(3)
    n = 100_000
    bank = standard_bridge_bank(n, 1.0, 8, 1, rng)
    mid = bank[:, 4, 0]
    assert abs(np.mean(mid)) <= 3.0 * np.std(mid) / math.sqrt(n)
    var = np.var(mid)
    se_var = np.std(mid**2) / math.sqrt(n)
    assert abs(var - 0.25) <= 3.0 * se_var

    shifted = bridge_from_noise(np.array([0.0]), np.array([2.0]), 1.0, bank[0])
    assert shifted[4, 0] == pytest.approx(1.0 + bank[0, 4, 0])
    mids = np.array([bridge_from_noise(np.array([0.0]), np.array([2.0]), 1.0, bank[i])[4, 0]
                     for i in range(2000)])
    assert abs(np.mean(mids) - 1.0) <= 3.0 * np.std(mids) / math.sqrt(2000)


def test_unnormalized_mass_closed_form():
    assert unnormalized_mass([0.0], [0.0], 1.0) == pytest.approx((2 * math.pi) ** -0.5)
    assert unnormalized_mass([0.0, 0.0], [0.0, 0.0], 1.0) == pytest.approx(1 / (2 * math.pi))
    rng = stream(4)
    for _ in range(20):
        x, y = rng.normal(size=2), rng.normal(size=2)
        t = float(rng.random() + 0.1)
        assert unnormalized_mass(x, y, t) == unnormalized_mass(y, x, t)


def test_unfold_standardize_roundtrip():
    rng = stream(5)
    for _ in range(25):
        x = rng.normal(size=2)
        y = rng.normal(size=2)
        beta = float(rng.random() * 2 + 0.1)
        b = sample_bridge(x, y, beta, 16, rng)
        omega = standardize(b)
        assert np.all(omega[0] == 0.0) and np.all(omega[-1] == 0.0)
        back = unfold(x, y, omega, beta)
        assert np.array_equal(back.start, b.start)
        assert np.array_equal(back.end, b.end)
        # interior nodes agree to ulp scale
        np.testing.assert_allclose(back.nodes, b.nodes, rtol=0, atol=1e-12)


def test_unfold_zero_mark_is_straight_segment():
    omega = np.zeros((9, 1))
    b = unfold(np.array([1.0]), np.array([3.0]), omega, 2.0)
    np.testing.assert_allclose(b.nodes[:, 0], np.linspace(1.0, 3.0, 9))


def test_standardize_straight_segment_is_zero():
    nodes = np.linspace(0.0, 1.0, 9)[:, None]
    b = Bridge(TimeGrid(1.0, 8), nodes)
    assert np.all(standardize(b) == 0.0)


def test_mark_triple_validation():
    omega = np.zeros((9, 1))
    MarkTriple(np.array([1]), 0.5, omega)
    with pytest.raises(ValueError):
        MarkTriple(np.array([1]), 1.5, omega)
    bad = omega.copy()
    bad[0] = 0.1
    with pytest.raises(ValueError):
        MarkTriple(np.array([1]), 0.5, bad)


def test_sausage_stadium_and_disk():
    spec = SausageSpec(1.0)
    seg = np.array([[0.0, 0.0], [2.0, 0.0]])
    est = sausage_volume(seg, spec)
    assert est.value == pytest.approx(4.0 + math.pi, rel=0.01)
    pt = np.array([[0.0, 0.0]])
    est2 = sausage_volume(pt, spec)
    assert est2.value == pytest.approx(math.pi, rel=0.01)


def test_sausage_methods_cross_check():
    rng = stream(6)
    bank = standard_bridge_bank(1, 1.0, 24, 2, rng)[0]
    spec_v = SausageSpec(0.5, "voxel")
    spec_m = SausageSpec(0.5, "montecarlo", resolution=200_000)
    v = sausage_volume(bank, spec_v)
    m = sausage_volume(bank, spec_m, rng=stream(7))
    # voxel carries a boundary-shell error of about one cell
    voxel_err = 0.02 * v.value
    assert abs(v.value - m.value) <= 3.0 * m.stderr + voxel_err


def test_sausage_monotone_in_delta_and_prefix():
    rng = stream(8)
    path = standard_bridge_bank(1, 1.0, 32, 2, rng)[0]
    edge = 0.4 / 14
    prev = 0.0
    for delta in (0.4, 0.5, 0.6):
        val = sausage_volume(path, SausageSpec(delta, resolution=edge)).value
        assert val >= prev
        prev = val
    prev = 0.0
    for n_nodes in (8, 16, 33):
        val = sausage_volume(path[:n_nodes], SausageSpec(0.4, resolution=edge)).value
        assert val >= prev - 1e-12
        prev = val


def test_sausage_single_ball_lower_bound():
    rng = stream(9)
    for d in (1, 2):
        path = standard_bridge_bank(1, 0.5, 16, d, rng)[0]
        delta = 0.5
        spec = SausageSpec(delta)
        val = sausage_volume(path, spec).value
        shell = unit_ball_volume(d) * delta**d * 0.05
        assert val >= unit_ball_volume(d) * delta**d - shell


def test_sausage_rejects_coarse_voxels():
    with pytest.raises(ConfigurationError):
        sausage_volume(np.zeros((2, 1)), SausageSpec(0.1, resolution=0.09))


def _loop_from(rng, j=3, beta=0.5, m=8, d=2):
    noise = standard_bridge_bank(1, beta * j, m * j, d, rng)[0]
    root = rng.normal(size=d)
    nodes = root + noise
    nodes[0] = root
    nodes[-1] = root
    return Loop(TimeGrid(beta * j, m * j), nodes, j)


def test_time_shift_identity_and_period():
    rng = stream(10)
    loop = _loop_from(rng)
    assert time_shift(loop, 0.0) is loop
    full = time_shift(loop, loop.beta * loop.length)
    assert np.array_equal(full.nodes, loop.nodes)
    shifted = time_shift(loop, loop.beta)
    # node multiset preserved under rotation
    assert sorted(map(tuple, shifted.nodes[:-1])) == sorted(map(tuple, loop.nodes[:-1]))
    assert not np.array_equal(shifted.nodes, loop.nodes)


def test_time_reverse_involution():
    rng = stream(11)
    b = sample_bridge(rng.normal(size=2), rng.normal(size=2), 1.0, 8, rng)
    rr = reverse_bridge(reverse_bridge(b))
    assert np.array_equal(rr.nodes, b.nodes)


def test_d_inf_cases():
    rng = stream(12)
    l1 = _loop_from(rng, j=1)
    l2 = _loop_from(rng, j=2)
    assert d_inf(l1, l1) == 0.0
    assert d_inf(l1, l2) == math.inf
    v = np.array([0.3, -0.4])
    moved = l1.translated(v)
    assert d_inf(l1, moved) == pytest.approx(float(np.linalg.norm(v)))
