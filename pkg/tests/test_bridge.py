import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid
from scipy.stats import kstest

from rotorloops.bridge import (LoopPath, PathConfiguration, free_loop_batch,
                               sample_bridge, sample_bridge_batch, sample_loop,
                               shift_path)
from rotorloops.stats import stream
from rotorloops.torus import GroupElement, HeatKernelParams, heat_kernel


def test_single_slice_bridge_is_just_endpoints():
    p = sample_bridge(np.array([0.2]), np.array([0.7]), 1.0, 1, stream(1, 0))
    assert p.L == 1
    assert p.points[0] == pytest.approx([0.2])
    assert p.points[1] == pytest.approx([0.7])


def test_midpoint_law_ks():
    # oracle: slice density at tau = beta/2 is p^{b/2}(0,z) p^{b/2}(z,0) / p^b(0,0)
    rng = stream(42, 2)
    pts, _ = sample_bridge_batch(np.zeros(1), np.zeros(1), 1.0, 8, 100_000, rng)
    mid = pts[:, 4, 0]
    grid = np.linspace(0.0, 1.0, 4097)
    ph = HeatKernelParams.for_beta(0.5)
    dens = heat_kernel(grid[:, None], np.zeros(1), ph) ** 2
    dens /= heat_kernel(np.zeros(1), np.zeros(1), HeatKernelParams.for_beta(1.0))
    cdf = cumulative_trapezoid(dens, grid, initial=0.0)
    cdf /= cdf[-1]
    res = kstest(mid, lambda q: np.interp(q, grid, cdf))
    assert res.pvalue > 0.01


def test_winding_frequency():
    # P(n = +-1) / P(n = 0) = exp(-1 / (2 beta)) at beta = 4
    rng = stream(42, 0)
    _, w = sample_bridge_batch(np.zeros(1), np.zeros(1), 4.0, 4, 100_000, rng)
    target = math.exp(-1.0 / 8.0)
    n0 = (w[:, 0] == 0).sum()
    for side in (1, -1):
        ns = (w[:, 0] == side).sum()
        ratio = ns / n0
        sigma = ratio * math.sqrt(1 / ns + 1 / n0)
        assert abs(ratio - target) < 3 * sigma


def test_loop_endpoints_and_base():
    loop = sample_loop(np.array([0.31]), 2.0, 8, stream(7, 0))
    assert loop.is_loop
    assert loop.points[0] == pytest.approx([0.31])
    assert loop.points[-1] == pytest.approx([0.31])


def test_interior_slice_variance():
    # Brownian bridge law: Var(omega(tau_k)) = tau_k (beta - tau_k) / beta,
    # conditioned on winding 0 so Euclidean coordinates apply
    rng = stream(42, 1)
    pts, w, lifted = sample_bridge_batch(np.zeros(1), np.zeros(1), 1.0, 8,
                                         100_000, rng, return_lifted=True)
    mask = w[:, 0] == 0
    n = int(mask.sum())
    for k in (2, 4, 6):
        tau = k / 8
        target = tau * (1 - tau)
        emp = lifted[mask, k, 0].var()
        sigma = target * math.sqrt(2.0 / (n - 1))
        assert abs(emp - target) < 3 * sigma


def test_seed_determinism():
    a = sample_loop(np.array([0.5]), 1.0, 16, stream(9, 0))
    b = sample_loop(np.array([0.5]), 1.0, 16, stream(9, 0))
    c = sample_loop(np.array([0.5]), 1.0, 16, stream(9, 1))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_bridge_argument_validation():
    with pytest.raises(ValueError):
        sample_bridge(np.zeros(1), np.zeros(1), 1.0, 0, stream(1, 0))
    with pytest.raises(ValueError):
        sample_bridge(np.zeros(1), np.zeros(1), -1.0, 4, stream(1, 0))


def test_shift_path_identity_inverse_order2():
    p = sample_loop(np.array([0.2]), 1.0, 8, stream(3, 0))
    e = GroupElement.identity(1)
    assert np.array_equal(shift_path(e, p).points, p.points)
    g = GroupElement.circle(0.37)
    back = shift_path(g.inverse(), shift_path(g, p))
    assert np.allclose(back.points, p.points, atol=1e-12)
    half = GroupElement.circle(0.5)
    twice = shift_path(half, shift_path(half, p))
    assert np.allclose(twice.points, p.points, atol=1e-12)


def test_configuration_concat_and_shift_commute():
    rng = stream(4, 0)
    a = PathConfiguration({(0,): sample_loop(np.array([0.1]), 1.0, 8, rng)})
    b = PathConfiguration({(1,): sample_loop(np.array([0.6]), 1.0, 8, rng)})
    g = GroupElement.circle(0.25)
    lhs = a.concat(b).shifted(g)
    rhs = a.shifted(g).concat(b.shifted(g))
    for v in lhs.vertices():
        assert np.allclose(lhs[v].points, rhs[v].points)
    with pytest.raises(ValueError):
        a.concat(a)


def test_concat_associative():
    rng = stream(5, 0)
    cfgs = [PathConfiguration({(i,): sample_loop(np.array([0.3]), 1.0, 4, rng)})
            for i in range(3)]
    left = cfgs[0].concat(cfgs[1]).concat(cfgs[2])
    right = cfgs[0].concat(cfgs[1].concat(cfgs[2]))
    assert set(left.vertices()) == set(right.vertices())


def test_free_loops_unit_mass_bases():
    pts = free_loop_batch(1.0, 8, 1, 2000, stream(8, 0))
    assert np.array_equal(pts[:, 0], pts[:, -1])
    assert 0.45 < pts[:, 0, 0].mean() < 0.55


def test_constant_loop():
    p = LoopPath.constant([0.4], 2.0, 8)
    assert p.is_loop and np.all(p.points == 0.4)
