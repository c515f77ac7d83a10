"""Reduced density matrix kernels: estimation, invariance, trace-norm tools.

Two estimators for the window kernel F(x0, y0):

* direct mode: numerator and denominator are free-measure averages of
  exp(-h) with the window carried by bridges (numerator) or free loops
  (denominator), sharing the environment loop draws; usable for small
  volumes (the free-measure variance grows exponentially with volume).
* chain mode: the ratio of constrained partition functions is written as
  a conditional expectation over the equilibrium chain (swap the window
  loop for the bridge in the local energy), which scales to larger boxes.

Both carry the heat-kernel endpoint prefactor analytically, use common
random numbers across numerator/denominator and across shifted kernels,
and reduce in a fixed order for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import sample_bridge_batch, free_loop_batch
from .gibbs import ModelSpec, _Chain, mcmc_run
from .torus import GroupElement, HeatKernelParams, act, heat_kernel, wrap


@dataclass
class RdmkEstimate:
    """Per-pair kernel estimates with propagated errors.

    pairs has shape (n_pairs, 2, n_window_sites, d): pairs[i, 0] is x0 and
    pairs[i, 1] is y0.  When shifted estimates were produced with coupled
    randomness, `shifted` maps a shift label to the values of F(g x0, g y0)
    and `shift_diff_stderr` to the error of the coupled difference.
    """

    window: tuple
    pairs: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int
    mode: str
    shifted: dict | None = None
    shift_diff_stderr: dict | None = None


def _ratio_error(num, den, c):
    """Delta-method stderr of c * mean(num)/mean(den) from paired samples."""
    n = num.shape[-1]
    mn = num.mean(axis=-1)
    md = den.mean()
    vn = num.var(axis=-1, ddof=1) / n
    vd = den.var(ddof=1) / n
    cov = ((num - mn[..., None]) * (den - md)).sum(axis=-1) / (n * (n - 1))
    r = mn / md
    var = r * r * (vn / mn**2 + vd / md**2 - 2 * cov / (mn * md))
    return np.abs(c) * np.sqrt(np.clip(var, 0.0, None))


def _pair_interactions(model: ModelSpec, window: tuple):
    """Weighted slice-interaction pair lists for h(window-bridges v rest | bc)."""
    sites = model.sites
    idx = {v: i for i, v in enumerate(sites)}
    reach = model.interaction.reach
    win_idx = [idx[v] for v in window]
    pairs = []
    for a, v in enumerate(sites):
        dv = model.graph.distances_from(v)
        for b in range(a + 1, len(sites)):
            r = dv.get(sites[b], -1)
            if 1 <= r <= reach:
                j = model.interaction.coupling(r)
                if j > 0:
                    pairs.append((a, b, 2.0 * j))
    bc_terms = []
    bc = model.boundary if (model.boundary is not None and len(model.boundary)) else None
    if bc is not None:
        for v in sites:
            dv = model.graph.distances_from(v)
            for w in bc.vertices():
                r = dv.get(w, -1)
                if 1 <= r <= reach:
                    j = model.interaction.coupling(r)
                    if j > 0:
                        bc_terms.append((idx[v], bc[w].points[: model.L], j))
    return win_idx, pairs, bc_terms


def _energy_batch(model: ModelSpec, pts: np.ndarray, pairs, bc_terms) -> np.ndarray:
    """h of a batch of full configurations pts (S, n_sites, L, d)."""
    tau = model.beta / model.L
    S = pts.shape[0]
    h = np.zeros(S)
    V = model.potential.value
    for a, b, w in pairs:
        h += w * V(pts[:, a], pts[:, b]).sum(axis=-1)
    for i, bpts, j in bc_terms:
        h += j * V(pts[:, i], bpts[None]).sum(axis=-1)
    return tau * h


def estimate_rdmk(model: ModelSpec, window, pairs, n_samples: int, rng, *,
                  shifts=(), mode: str = "direct", chain_sweeps: int = 20000,
                  chain_thin: int = 5, bridges_per_state: int = 4,
                  batch: int = 4096) -> RdmkEstimate:
    """Estimate the reduced kernel on the given endpoint pairs.

    window: ordered tuple of vertices carrying the open endpoints.
    pairs: array-like (n_pairs, 2, n_window, d).
    shifts: group elements; for each, coupled shifted estimates are
    produced by applying the shift to the sampled paths (the boundary
    stays fixed), so under a free boundary the coupled difference
    vanishes identically.
    """
    window = tuple(window)
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 4 or pairs.shape[1] != 2 or pairs.shape[2] != len(window):
        raise ValueError("pairs must have shape (n_pairs, 2, n_window, d)")
    if mode == "direct":
        if len(model.sites) > 12:
            raise ValueError("direct mode is limited to small volumes "
                             "(free-measure variance grows with volume); "
                             "use mode='chain'")
        return _estimate_direct(model, window, pairs, n_samples, rng, shifts, batch)
    if mode == "chain":
        return _estimate_chain(model, window, pairs, rng, shifts,
                               chain_sweeps, chain_thin, bridges_per_state)
    raise ValueError(f"unknown mode {mode!r}")


def _kernel_prefactors(model: ModelSpec, pairs: np.ndarray) -> np.ndarray:
    """prod_j p(x_j, y_j) / p(0, 0) per pair (endpoint heat-kernel weights)."""
    params = HeatKernelParams.for_beta(model.beta)
    origin = np.zeros(model.d)
    p0 = heat_kernel(origin, origin, params)
    n_pairs, _, nw, _ = pairs.shape
    pref = np.ones(n_pairs)
    for j in range(nw):
        pref *= heat_kernel(pairs[:, 0, j], pairs[:, 1, j], params) / p0
    return pref


def _estimate_direct(model, window, pairs, n_samples, rng, shifts, batch):
    sites = model.sites
    n_sites = len(sites)
    L, d = model.L, model.d
    win_idx, pair_terms, bc_terms = _pair_interactions(model, window)
    env_idx = [i for i in range(n_sites) if i not in win_idx]
    pref = _kernel_prefactors(model, pairs)
    n_pairs = pairs.shape[0]

    shifts = list(shifts)
    num = np.zeros((n_pairs, n_samples))
    num_shift = {k: np.zeros((n_pairs, n_samples)) for k in range(len(shifts))}
    den = np.zeros(n_samples)

    done = 0
    while done < n_samples:
        s = min(batch, n_samples - done)
        pts = np.empty((s, n_sites, L, d))
        env = free_loop_batch(model.beta, L, d, s * max(len(env_idx), 1), rng)
        env = env.reshape(s, max(len(env_idx), 1), L + 1, d)
        for k, i in enumerate(env_idx):
            pts[:, i] = env[:, k, :L]
        # Denominator: the window also carries free loops.
        wloops = free_loop_batch(model.beta, L, d, s * len(window), rng)
        wloops = wloops.reshape(s, len(window), L + 1, d)
        pts_den = pts.copy()
        for k, i in enumerate(win_idx):
            pts_den[:, i] = wloops[:, k, :L]
        den[done:done + s] = np.exp(-_energy_batch(model, pts_den, pair_terms, bc_terms))
        # Numerator: bridges per pair, same environment.
        for ip in range(n_pairs):
            pts_num = pts.copy()
            for k, i in enumerate(win_idx):
                br, _ = sample_bridge_batch(pairs[ip, 0, k], pairs[ip, 1, k],
                                            model.beta, L, s, rng)
                pts_num[:, i] = br[:, :L]
            num[ip, done:done + s] = np.exp(
                -_energy_batch(model, pts_num, pair_terms, bc_terms))
            for ks, g in enumerate(shifts):
                shifted = wrap(pts_num + g.shift)
                num_shift[ks][ip, done:done + s] = np.exp(
                    -_energy_batch(model, shifted, pair_terms, bc_terms))
        done += s

    mean_den = den.mean()
    mean = pref * num.mean(axis=1) / mean_den
    stderr = _ratio_error(num, den, pref)
    shifted_out, diff_err = None, None
    if shifts:
        shifted_out, diff_err = {}, {}
        for ks, g in enumerate(shifts):
            key = _shift_label(g)
            shifted_out[key] = pref * num_shift[ks].mean(axis=1) / mean_den
            diff = num_shift[ks] - num
            diff_err[key] = np.abs(pref) * diff.std(axis=1, ddof=1) / (
                mean_den * math.sqrt(n_samples))
    return RdmkEstimate(window=window, pairs=pairs, mean=mean, stderr=stderr,
                        n_samples=n_samples, mode="direct", shifted=shifted_out,
                        shift_diff_stderr=diff_err)


def _estimate_chain(model, window, pairs, rng, shifts, chain_sweeps, chain_thin,
                    bridges_per_state):
    """Swap-form conditional-expectation estimator over the equilibrium chain.

    For a one-site window o, the constrained-to-full partition ratio obeys
      F(x, y) = p(x, y)/p(0, 0) * E_mu[ exp(h_o(current loop) - h_o(bridge)) ]
    with h_o the local conditional energy used by the Metropolis updates.
    """
    if len(window) != 1:
        raise ValueError("chain mode supports one-site windows")
    run = mcmc_run(model, chain_sweeps, rng, thin=chain_thin, record_paths=True)
    chain = _Chain(model, rng, init=run.configuration(0))
    site = window[0]
    i = model.sites.index(site)
    L = model.L
    pref = _kernel_prefactors(model, pairs)
    n_pairs = pairs.shape[0]
    n_states = run.paths.shape[0]
    shifts = list(shifts)

    ratios = np.zeros((n_pairs, n_states))
    ratios_shift = {k: np.zeros((n_pairs, n_states)) for k in range(len(shifts))}
    for st in range(n_states):
        chain.pts[:] = run.paths[st]
        h_loop = chain.local_energy(i, chain.pts[i])
        for ip in range(n_pairs):
            br, _ = sample_bridge_batch(pairs[ip, 0, 0], pairs[ip, 1, 0],
                                        model.beta, L, bridges_per_state, rng)
            acc = 0.0
            accs = [0.0] * len(shifts)
            for bidx in range(bridges_per_state):
                h_br = chain.local_energy(i, br[bidx])
                acc += math.exp(h_loop - h_br)
                for ks, g in enumerate(shifts):
                    h_brs = chain.local_energy(i, wrap(br[bidx] + g.shift))
                    accs[ks] += math.exp(h_loop - h_brs)
            ratios[ip, st] = acc / bridges_per_state
            for ks in range(len(shifts)):
                ratios_shift[ks][ip, st] = accs[ks] / bridges_per_state

    mean = pref * ratios.mean(axis=1)
    stderr = np.abs(pref) * ratios.std(axis=1, ddof=1) / math.sqrt(n_states)
    shifted_out, diff_err = None, None
    if shifts:
        shifted_out, diff_err = {}, {}
        for ks, g in enumerate(shifts):
            key = _shift_label(g)
            shifted_out[key] = pref * ratios_shift[ks].mean(axis=1)
            diff = ratios_shift[ks] - ratios
            diff_err[key] = np.abs(pref) * diff.std(axis=1, ddof=1) / math.sqrt(n_states)
    return RdmkEstimate(window=window, pairs=pairs, mean=mean, stderr=stderr,
                        n_samples=n_states, mode="chain", shifted=shifted_out,
                        shift_diff_stderr=diff_err)


def _shift_label(g: GroupElement) -> str:
    return "g=" + ",".join(f"{t:.6g}" for t in np.atleast_1d(g.shift))


@dataclass
class InvarianceReport:
    """Coupled comparison of F(x, y) against F(g x, g y)."""

    shift: str
    max_abs_diff: float
    max_diff_stderr: float
    exact_coupled: bool

    @property
    def exact_zero(self) -> bool:
        return self.max_abs_diff <= 1e-12


def check_invariance(est: RdmkEstimate, g: GroupElement) -> InvarianceReport:
    """Report the largest |F(x0,y0) - F(gx0,gy0)| over the estimated pairs.

    Requires the estimate to carry coupled shifted values for g; refuses
    to claim exactness otherwise.
    """
    key = _shift_label(g)
    if est.shifted is None or key not in est.shifted:
        raise ValueError("estimate carries no coupled values for this shift; "
                         "rerun estimate_rdmk with shifts=(g,)")
    diff = np.abs(est.shifted[key] - est.mean)
    return InvarianceReport(shift=key,
                            max_abs_diff=float(diff.max()),
                            max_diff_stderr=float(est.shift_diff_stderr[key].max()),
                            exact_coupled=True)


# ---------------------------------------------------------------------------
# Kernel matrices, trace norm, positivity
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KernelMatrix:
    """Square kernel matrix on the regular grid with its quadrature weight."""

    matrix: np.ndarray
    weight: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kernel matrix must be square")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def grid_trace(self) -> float:
        return float(np.trace(self.matrix) * self.weight)


def kernel_matrix(values: np.ndarray, weight: float | None = None) -> KernelMatrix:
    """Wrap grid kernel values; weight defaults to 1/dim (midpoint rule)."""
    values = np.asarray(values, dtype=float)
    w = (1.0 / values.shape[0]) if weight is None else float(weight)
    return KernelMatrix(matrix=values, weight=w)


def estimate_to_kernel_matrix(est: RdmkEstimate, m: int) -> KernelMatrix:
    """Reshape a full-grid pair estimate into its kernel matrix."""
    dim = m ** (len(est.window) * est.pairs.shape[-1])
    if est.mean.size != dim * dim:
        raise ValueError("estimate does not cover the full grid of pairs")
    return KernelMatrix(matrix=est.mean.reshape(dim, dim), weight=1.0 / dim)


def grid_pair_array(m: int, window: int = 1, d: int = 1) -> np.ndarray:
    """All (x0, y0) grid pairs in kernel-matrix order (row = x, column = y)."""
    from itertools import product

    from .torus import grid_points

    g = grid_points(m)
    states = [np.array(c, dtype=float).reshape(window, d)
              for c in product(g, repeat=window * d)]
    pairs = np.empty((len(states) ** 2, 2, window, d))
    k = 0
    for x0 in states:
        for y0 in states:
            pairs[k, 0] = x0
            pairs[k, 1] = y0
            k += 1
    return pairs


def trace_norm_distance(a: KernelMatrix, b: KernelMatrix) -> float:
    """Trace norm (sum of singular values) of the weighted difference."""
    if a.dim != b.dim or not math.isclose(a.weight, b.weight):
        raise ValueError("kernel matrices live on different grids")
    diff = a.weight * (a.matrix - b.matrix)
    return float(np.linalg.svd(diff, compute_uv=False).sum())


@dataclass
class PsdReport:
    min_eigenvalue: float
    dim: int

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= -1e-10


def psd_check(a: KernelMatrix) -> PsdReport:
    """Most negative eigenvalue of the symmetrized weighted matrix."""
    sym = 0.5 * a.weight * (a.matrix + a.matrix.T)
    vals = np.linalg.eigvalsh(sym)
    return PsdReport(min_eigenvalue=float(vals.min()), dim=a.dim)


def free_kernel_values(m: int, beta: float, trunc: int | None = None) -> np.ndarray:
    """Exact non-interacting one-site kernel F(x_a, x_b) = p(x_a,x_b)/p(0,0).

    trunc overrides the winding truncation (used by the truncated-kernel
    convergence sweeps); grid points are a/m.
    """
    from .torus import _image_sum_1d, default_truncation, grid_points

    n = trunc if trunc is not None else default_truncation(beta)
    g = grid_points(m)
    delta = g[:, None] - g[None, :]
    vals = _image_sum_1d(delta, beta, n)
    return vals / _image_sum_1d(np.zeros(1), beta, n)[0]


def partial_trace_one_site(k2: KernelMatrix, m: int) -> KernelMatrix:
    """Grid partial trace of a two-site kernel over its second site."""
    if k2.dim != m * m:
        raise ValueError("expected an (m^2, m^2) two-site kernel")
    t = k2.matrix.reshape(m, m, m, m)  # (x1, x2, y1, y2)
    reduced = np.einsum("abcb->ac", t) / m
    return KernelMatrix(matrix=reduced, weight=1.0 / m)


def save_kernel_matrix(path, k: KernelMatrix, *, m: int, d: int = 1,
                       window_size: int = 1, extra: dict | None = None) -> None:
    """Dense binary export with grid header (m, d, window size, weight)."""
    from .dumpio import save_dump

    meta = {"m": m, "d": d, "window_size": window_size, "weight": k.weight}
    if extra:
        meta.update(extra)
    save_dump(path, meta, {"matrix": k.matrix})


def load_kernel_matrix(path) -> tuple[dict, KernelMatrix]:
    from .dumpio import load_dump

    meta, arrays = load_dump(path)
    return meta, KernelMatrix(matrix=arrays["matrix"], weight=float(meta["weight"]))
