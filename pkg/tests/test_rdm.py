import numpy as np
import pytest

from rotorloops.energy import InteractionProfile, PotentialSpec
from rotorloops.gibbs import ModelSpec, transfer_matrix_oracle
from rotorloops.graph import build_lattice
from rotorloops.rdm import (KernelMatrix, check_invariance, estimate_rdmk,
                            estimate_to_kernel_matrix, free_kernel_values,
                            grid_pair_array, kernel_matrix, load_kernel_matrix,
                            partial_trace_one_site, psd_check, save_kernel_matrix,
                            trace_norm_distance)
from rotorloops.stats import stream
from rotorloops.symbreak import BoundarySpec, build_boundary
from rotorloops.torus import GroupElement, HeatKernelParams, heat_kernel


def ring_model(n_sites, potential, beta=1.0, L=16):
    g = build_lattice("ring", n_sites)
    return ModelSpec(graph=g, beta=beta, L=L, potential=potential,
                     interaction=InteractionProfile.nearest_neighbor(), d=1)


def pair_block(xs, ys):
    return np.array([[[[a]], [[b]]] for a in xs for b in ys])


def test_free_kernel_is_exact_product_form():
    model = ring_model(2, PotentialSpec.zero())
    gp = np.arange(6) / 6
    pairs = pair_block(gp[:3], gp[:3])
    est = estimate_rdmk(model, ((0,),), pairs, 4000, stream(20, 0))
    ph = HeatKernelParams.for_beta(1.0)
    p0 = heat_kernel(np.zeros(1), np.zeros(1), ph)
    exact = np.array([heat_kernel(p[0, 0], p[1, 0], ph) / p0 for p in pairs])
    # without interaction the weights are identically 1: exact equality
    assert np.allclose(est.mean, exact, atol=1e-12)
    assert np.allclose(est.stderr, 0.0)


def test_direct_estimate_matches_oracle_and_is_symmetric():
    model = ring_model(2, PotentialSpec.cosine())
    orc = transfer_matrix_oracle(model, 128)
    F = orc.rdmk((0,))
    gp = np.arange(8) / 8
    pairs = pair_block(gp[:4], gp[:4])
    est = estimate_rdmk(model, ((0,),), pairs, 60_000, stream(800, 0))
    idx = (pairs[:, 0, 0, 0] * 128).astype(int), (pairs[:, 1, 0, 0] * 128).astype(int)
    z = (est.mean - F[idx]) / est.stderr
    assert np.abs(z).max() < 3.0
    # hermitian symmetry: F(x, y) vs F(y, x) within 3 sigma
    grid = est.mean.reshape(4, 4)
    err = est.stderr.reshape(4, 4)
    diff = np.abs(grid - grid.T)
    comb = np.sqrt(err**2 + err.T**2)
    assert np.all(diff <= 3 * comb + 1e-12)


def test_chain_estimate_matches_oracle():
    model = ring_model(2, PotentialSpec.cosine())
    orc = transfer_matrix_oracle(model, 128)
    F = orc.rdmk((0,))
    gp = np.arange(4) / 4
    pairs = pair_block(gp, gp)
    est = estimate_rdmk(model, ((0,),), pairs, 0, stream(31, 0), mode="chain",
                        chain_sweeps=16000, chain_thin=5, bridges_per_state=4)
    idx = (pairs[:, 0, 0, 0] * 128).astype(int), (pairs[:, 1, 0, 0] * 128).astype(int)
    z = (est.mean - F[idx]) / est.stderr
    assert np.abs(z).max() < 3.5


def test_direct_mode_refuses_large_volumes():
    g = build_lattice("square_box", 2)
    model = ModelSpec(graph=g, beta=1.0, L=8, potential=PotentialSpec.cosine(),
                      interaction=InteractionProfile.nearest_neighbor(), d=1)
    with pytest.raises(ValueError):
        estimate_rdmk(model, ((0, 0),), pair_block([0.0], [0.0]), 100,
                      stream(1, 0))


def test_coupled_shift_exactness_free_boundary():
    model = ring_model(3, PotentialSpec.cosine())
    g = GroupElement.circle(0.25)
    pairs = pair_block([0.0, 0.25], [0.125])
    est = estimate_rdmk(model, ((0,),), pairs, 8000, stream(32, 0), shifts=(g,))
    rep = check_invariance(est, g)
    assert rep.exact_coupled
    assert rep.max_abs_diff <= 1e-12


def test_check_invariance_requires_coupling():
    model = ring_model(2, PotentialSpec.cosine())
    est = estimate_rdmk(model, ((0,),), pair_block([0.0], [0.0]), 500,
                        stream(33, 0))
    with pytest.raises(ValueError):
        check_invariance(est, GroupElement.circle(0.25))


def test_cooled_boundary_defect_is_nonzero_and_free_of_v_is_zero():
    # with V = 0 the boundary decouples: coupled difference vanishes
    g = build_lattice("square_box", 1)
    bc = build_boundary(BoundarySpec(kind="cooled", x_star=0.0), g, 1.0, 8)
    model = ModelSpec(graph=g, beta=1.0, L=8, potential=PotentialSpec.zero(),
                      interaction=InteractionProfile.nearest_neighbor(),
                      boundary=bc, d=1)
    gshift = GroupElement.circle(0.25)
    est = estimate_rdmk(model, ((0, 0),), pair_block([0.0], [0.0]), 2000,
                        stream(34, 0), shifts=(gshift,))
    assert check_invariance(est, gshift).max_abs_diff <= 1e-12
    # with the cosine potential the cooled boundary breaks the coupling
    model_c = ModelSpec(graph=g, beta=1.0, L=8, potential=PotentialSpec.cosine(),
                        interaction=InteractionProfile.nearest_neighbor(),
                        boundary=bc, d=1)
    est_c = estimate_rdmk(model_c, ((0, 0),), pair_block([0.0], [0.25]), 20000,
                          stream(35, 0), shifts=(gshift,))
    rep = check_invariance(est_c, gshift)
    assert rep.max_abs_diff > 3 * rep.max_diff_stderr


def test_normalization_grid_trace():
    model = ring_model(2, PotentialSpec.cosine())
    m = 32
    gp = np.arange(m) / m
    diag = np.array([[[[a]], [[a]]] for a in gp])
    est = estimate_rdmk(model, ((0,),), diag, 30_000, stream(36, 0))
    trace = est.mean.mean()
    err = np.sqrt((est.stderr**2).sum()) / m + 1e-3  # MC + grid error
    assert abs(trace - 1.0) < 3 * err


def test_uniform_kernel_bound():
    model = ring_model(2, PotentialSpec.cosine())
    gp = np.arange(6) / 6
    est = estimate_rdmk(model, ((0,),), pair_block(gp, gp), 4000, stream(37, 0))
    ph = HeatKernelParams.for_beta(model.beta)
    grid = np.arange(256) / 256
    p_bar = float(np.max(heat_kernel(grid[:, None], np.zeros(1), ph)))
    bound = np.exp(2 * model.beta * 4.0 * model.potential.v_bar) * p_bar
    assert np.all(est.mean <= bound)


def test_compatibility_partial_trace():
    # window {s0} of a 2-site model vs partial trace of the {s0, s1} kernel
    model = ring_model(2, PotentialSpec.cosine(), L=8)
    m = 6
    gp = np.arange(m) / m
    from itertools import product

    pairs2 = []
    for x1, x2 in product(gp, repeat=2):
        for y1, y2 in product(gp, repeat=2):
            pairs2.append([[[x1], [x2]], [[y1], [y2]]])
    pairs2 = np.asarray(pairs2)
    est2 = estimate_rdmk(model, ((0,), (1,)), pairs2, 30_000, stream(38, 0))
    k2 = estimate_to_kernel_matrix(est2, m)
    reduced = partial_trace_one_site(k2, m)
    est1 = estimate_rdmk(model, ((0,),), pair_block(gp, gp), 30_000, stream(38, 1))
    direct = est1.mean.reshape(m, m)
    err1 = est1.stderr.reshape(m, m)
    err2 = est2.stderr.reshape(m * m, m * m)
    err2_red = np.sqrt(np.einsum("abcb->ac",
                                 (err2**2).reshape(m, m, m, m))) / m
    comb = np.sqrt(err1**2 + err2_red**2)
    assert np.all(np.abs(reduced.matrix - direct) <= 3 * comb + 2e-3)


def test_kernel_matrix_and_trace_norm_examples():
    a = kernel_matrix(np.diag([1.0, 0.0]), weight=1.0)
    for eps in (0.25, 1e-3):
        b = kernel_matrix(np.diag([1.0 - eps, eps]), weight=1.0)
        assert trace_norm_distance(a, b) == pytest.approx(2 * eps, rel=1e-12)
    with pytest.raises(ValueError):
        trace_norm_distance(a, kernel_matrix(np.eye(3)))
    with pytest.raises(ValueError):
        KernelMatrix(matrix=np.ones((2, 3)), weight=1.0)


def test_truncated_kernel_trace_norm_sweep():
    # uniform kernel convergence forces trace-norm convergence
    ref = kernel_matrix(free_kernel_values(64, 1.0, trunc=14))
    prev = np.inf
    dists = []
    for n in range(1, 9):
        d = trace_norm_distance(kernel_matrix(free_kernel_values(64, 1.0, trunc=n)),
                                ref)
        assert d < prev
        prev = d
        dists.append(d)
    assert dists[-1] < 1e-10


def test_psd_of_exact_free_kernel():
    rep = psd_check(kernel_matrix(free_kernel_values(64, 1.0)))
    assert rep.passed
    assert rep.min_eigenvalue >= -1e-10


def test_grid_trace_of_free_kernel():
    k = kernel_matrix(free_kernel_values(32, 1.0))
    assert k.grid_trace() == pytest.approx(1.0, abs=1e-12)


def test_grid_pair_array_matches_matrix_order():
    pairs = grid_pair_array(4, window=1, d=1)
    assert pairs.shape == (16, 2, 1, 1)
    # row-major over (x, y)
    assert pairs[1, 0, 0, 0] == 0.0 and pairs[1, 1, 0, 0] == 0.25
    assert pairs[4, 0, 0, 0] == 0.25 and pairs[4, 1, 0, 0] == 0.0


def test_kernel_matrix_io(tmp_path):
    k = kernel_matrix(free_kernel_values(16, 0.5))
    path = tmp_path / "kernel.rldump"
    save_kernel_matrix(path, k, m=16, d=1, window_size=1)
    meta, back = load_kernel_matrix(path)
    assert meta["m"] == 16 and meta["weight"] == pytest.approx(1 / 16)
    assert np.array_equal(back.matrix, k.matrix)
