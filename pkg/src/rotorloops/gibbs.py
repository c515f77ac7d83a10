"""Finite-volume loop-ensemble Gibbs sampling and its exact small-system oracle.

The chain's stationary density relative to the free loop measure is
exp(-h) with h = config_energy(interior) + boundary_energy(interior, bc);
per-vertex Metropolis proposals are drawn from the free measure itself
(plus rigid-shift and bridge-segment moves), so the acceptance ratio is
exactly exp(-dh) of the interaction terms.

All conditional updates (single-vertex moves, block resampling in the
consistency check) are derived from that one functional, so interactions
between two in-model vertices enter local energies with weight 2 (both
orientations of the ordered-pair sum) while declared-boundary terms enter
with weight 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import (LoopPath, PathConfiguration, free_loop_batch,
                     sample_bridge_batch)
from .energy import InteractionProfile, PotentialSpec, boundary_energy, config_energy
from .graph import Graph
from .stats import TvReport, integrated_autocorr_time, stream, tv_permutation_test
from .torus import heat_kernel_grid, wrap


class InfeasibleStartError(RuntimeError):
    """The initial configuration has zero weight (hard-core violation)."""


class ZeroAcceptanceError(RuntimeError):
    """No move was accepted over the configured diagnostic window."""


@dataclass
class ModelSpec:
    """Finite-volume model: region, slicing, potentials, boundary condition.

    `boundary` is a PathConfiguration over vertices outside the graph
    interior (typically the outer annulus); None means free boundary.
    """

    graph: Graph
    beta: float
    L: int
    potential: PotentialSpec
    interaction: InteractionProfile
    boundary: PathConfiguration | None = None
    d: int = 1

    def __post_init__(self):
        if self.beta <= 0 or self.L < 1:
            raise ValueError("need beta > 0 and L >= 1")
        if self.boundary is not None and len(self.boundary):
            inside = set(self.graph.interior) & set(self.boundary.vertices())
            if inside:
                raise ValueError(f"boundary vertices inside the region: {sorted(inside)[:4]}")
            if self.boundary.L != self.L or self.boundary.beta != self.beta:
                raise ValueError("boundary paths must share beta and L")

    @property
    def sites(self) -> list:
        return sorted(self.graph.interior)

    def site_index(self) -> dict:
        return {v: i for i, v in enumerate(self.sites)}


@dataclass
class ChainStats:
    sweeps: int
    burn_in: int
    acceptance: dict
    autocorr: dict
    collective_acceptance: float | None = None


@dataclass
class McmcResult:
    """Recorded post-burn-in samples (weight-free draws) plus diagnostics."""

    sites: list
    sweep_index: np.ndarray       # (n_rec,)
    base_points: np.ndarray       # (n_rec, n_sites, d)
    energies: np.ndarray          # (n_rec,)
    paths: np.ndarray | None      # (n_rec, n_sites, L+1, d) when recorded
    stats: ChainStats
    beta: float = 0.0
    L: int = 0

    def configuration(self, k: int) -> PathConfiguration:
        if self.paths is None:
            raise ValueError("run was recorded without paths")
        return PathConfiguration({
            v: LoopPath(beta=self.beta, points=self.paths[k, i],
                        winding=np.zeros(self.paths.shape[-1], dtype=int),
                        is_loop=True)
            for i, v in enumerate(self.sites)})


def log_unnormalized_density(model: ModelSpec, cfg: PathConfiguration) -> float:
    """log of the stationary density relative to the free measure: -h(cfg | bc)."""
    region = model.sites
    missing = [v for v in region if v not in cfg]
    if missing or len(cfg) != len(region):
        raise ValueError("configuration region does not match the model interior")
    h = config_energy(model.graph, model.interaction, model.potential, region, cfg)
    if math.isinf(h):
        return -math.inf
    if model.boundary is not None and len(model.boundary):
        h += boundary_energy(model.graph, model.interaction, model.potential,
                             cfg, model.boundary)
    return -h if not math.isinf(h) else -math.inf


def constant_configuration(model: ModelSpec, x) -> PathConfiguration:
    """All interior loops frozen at the point x (feasible start for cooled models)."""
    return PathConfiguration({
        v: LoopPath.constant(x, model.beta, model.L) for v in model.sites})


class _Chain:
    """Array-backed Metropolis chain over the model interior."""

    def __init__(self, model: ModelSpec, rng, *, init=None, moves=None,
                 rigid_step: float = 0.1, active=None):
        self.model = model
        self.rng = rng
        self.sites = model.sites
        self.n = len(self.sites)
        self.L = model.L
        self.d = model.d
        self.beta = model.beta
        self.tau = model.beta / model.L
        self.rigid_step = rigid_step
        if moves is None:
            moves = (("rigid", "segment", "collective")
                     if not model.potential.smooth else ("free", "rigid"))
        self.moves = tuple(moves)
        self._pot_kind = model.potential.kind
        self._theta_hc = model.potential.theta_hc
        self._seg_w = max(2, self.L // 4)
        if self.L >= 2:
            from .torus import default_truncation

            self._seg_ns = np.arange(
                -default_truncation(self._seg_w * self.tau),
                default_truncation(self._seg_w * self.tau) + 1, dtype=float)
        self._build_neighbor_tables()
        self.pts = self._init_points(init)
        self.accepted = np.zeros(self.n, dtype=np.int64)
        self.attempted = np.zeros(self.n, dtype=np.int64)
        self.collective_accepted = 0
        self.collective_attempted = 0
        self.active = (np.ones(self.n, dtype=bool) if active is None
                       else np.asarray(active, dtype=bool))
        self._active_idx = np.nonzero(self.active)[0]

    # -- setup -------------------------------------------------------------

    def _build_neighbor_tables(self):
        m = self.model
        idx = {v: i for i, v in enumerate(self.sites)}
        reach = m.interaction.reach
        self.nbr_idx: list[np.ndarray] = []
        self.nbr_w: list[np.ndarray] = []
        self.bc_pts: list[np.ndarray | None] = []
        self.bc_w: list[np.ndarray | None] = []
        bc = m.boundary if (m.boundary is not None and len(m.boundary)) else None
        for v in self.sites:
            dists = m.graph.distances_from(v)
            ii, ww = [], []
            for u, r in dists.items():
                if u == v or r < 1 or r > reach or u not in idx:
                    continue
                j = m.interaction.coupling(r)
                if j > 0:
                    ii.append(idx[u])
                    ww.append(2.0 * j)  # both orientations of the ordered sum
            self.nbr_idx.append(np.asarray(ii, dtype=int))
            self.nbr_w.append(np.asarray(ww, dtype=float))
            if bc is None:
                self.bc_pts.append(None)
                self.bc_w.append(None)
                continue
            bpts, bw = [], []
            for u in bc.vertices():
                r = dists.get(u, -1)
                if r < 1 or r > reach:
                    continue
                j = m.interaction.coupling(r)
                if j > 0:
                    bpts.append(bc[u].points[: self.L])
                    bw.append(j)
            if bpts:
                self.bc_pts.append(np.stack(bpts))
                self.bc_w.append(np.asarray(bw, dtype=float))
            else:
                self.bc_pts.append(None)
                self.bc_w.append(None)
        # Unordered in-model pair list for full-energy evaluation.
        pairs = []
        for a, v in enumerate(self.sites):
            dists = m.graph.distances_from(v)
            for b in range(a + 1, self.n):
                r = dists.get(self.sites[b], -1)
                if r < 1 or r > reach:
                    continue
                j = m.interaction.coupling(r)
                if j > 0:
                    pairs.append((a, b, 2.0 * j))
        self.pairs = pairs

    def _init_points(self, init) -> np.ndarray:
        pts = np.empty((self.n, self.L + 1, self.d))
        if init is None:
            if not self.model.potential.smooth:
                raise InfeasibleStartError(
                    "singular potential requires an explicit feasible start")
            for i in range(self.n):
                pts[i] = self._draw_free_loop()
        else:
            for i, v in enumerate(self.sites):
                if v not in init:
                    raise InfeasibleStartError(f"initial configuration missing {v}")
                pts[i] = init[v].points
        e = self._total_energy(pts)
        if math.isinf(e):
            raise InfeasibleStartError("initial configuration has zero weight")
        return pts

    # -- energies ------------------------------------------------------------

    def _slice_totals(self, cs: np.ndarray, arr: np.ndarray) -> np.ndarray | float:
        """Per-neighbor slice-summed potential of cs (L, d) vs arr (n, L, d).

        Fused fast paths for the cosine family avoid the generic dispatch
        in the sampler's inner loop; math.inf signals a hard-core hit.
        """
        if self._pot_kind == "zero":
            return np.zeros(arr.shape[0])
        if self._pot_kind == "tabulated":
            s = self.model.potential.value(cs[None], arr).sum(axis=1)
            return s if np.all(np.isfinite(s)) else math.inf
        delta = arr - cs[None]
        if self._pot_kind == "singular_cosine":
            rho = np.abs(np.mod(delta + 0.5, 1.0) - 0.5).max(axis=2)
            if np.any(rho > self._theta_hc + 1e-12):
                return math.inf
        # cos(2 pi delta) needs no wrapping: it is 1-periodic exactly.
        return -np.cos(2.0 * np.pi * delta).sum(axis=(1, 2))

    def local_energy(self, i: int, cand: np.ndarray) -> float:
        """Interaction energy of site i's path against neighbors and boundary."""
        cs = cand[: self.L]
        tot = 0.0
        if self.nbr_idx[i].size:
            s = self._slice_totals(cs, self.pts[self.nbr_idx[i]][:, : self.L])
            if np.isscalar(s):
                return math.inf
            tot += float(self.nbr_w[i] @ s)
        if self.bc_pts[i] is not None:
            s = self._slice_totals(cs, self.bc_pts[i])
            if np.isscalar(s):
                return math.inf
            tot += float(self.bc_w[i] @ s)
        return self.tau * tot

    def _total_energy(self, pts: np.ndarray) -> float:
        tot = 0.0
        for a, b, w in self.pairs:
            s = self._slice_totals(pts[a, : self.L], pts[b, : self.L][None])
            if np.isscalar(s):
                return math.inf
            tot += w * self.tau * float(s[0])
        for i in range(self.n):
            if self.bc_pts[i] is not None:
                s = self._slice_totals(pts[i, : self.L], self.bc_pts[i])
                if np.isscalar(s):
                    return math.inf
                tot += self.tau * float(self.bc_w[i] @ s)
        return tot

    def total_energy(self) -> float:
        return self._total_energy(self.pts)

    # -- proposals -----------------------------------------------------------

    def _draw_free_loop(self) -> np.ndarray:
        base = self.rng.random(self.d)
        pts, _ = sample_bridge_batch(base, base, self.beta, self.L, 1, self.rng)
        return pts[0]

    def _propose(self, i: int, kind: str) -> np.ndarray | None:
        cur = self.pts[i]
        if kind == "free":
            return self._draw_free_loop()
        if kind == "rigid":
            delta = self.rng.uniform(-self.rigid_step, self.rigid_step, self.d)
            return wrap(cur + delta)
        if kind == "segment":
            return self._propose_segment(cur)
        raise ValueError(f"unknown move kind {kind!r}")

    def _propose_segment(self, cur: np.ndarray) -> np.ndarray | None:
        """Redraw an interior window of the path from its conditional bridge law.

        Inlined winding draw plus sequential conditioning; this is the
        sampler's hot path for hard-core models.
        """
        if self.L < 2:
            return None
        w = self._seg_w
        a = int(self.rng.integers(0, self.L - w + 1)) if self.L > w else 0
        b = a + w
        beta_seg = w * self.tau
        x0, x1 = cur[a], cur[b]
        delta = np.mod(x1 - x0 + 0.5, 1.0) - 0.5
        zz = delta[:, None] + self._seg_ns[None, :]
        cdf = np.cumsum(np.exp(-0.5 * zz * zz / beta_seg), axis=1)
        u = self.rng.random(self.d) * cdf[:, -1]
        wind = self._seg_ns[(cdf < u[:, None]).sum(axis=1)]
        end = x0 + delta + wind
        cand = cur.copy()
        pos = x0.astype(float, copy=True)
        normals = self.rng.standard_normal((w - 1, self.d))
        dt = self.tau
        for k in range(1, w):
            remain = beta_seg - (k - 1) * dt
            pos = pos + (end - pos) * (dt / remain) + math.sqrt(
                dt * (remain - dt) / remain) * normals[k - 1]
            cand[a + k] = np.mod(pos, 1.0)
        return cand

    # -- sweeps ---------------------------------------------------------------

    def sweep(self):
        # Free proposals are state-independent: draw the whole sweep's batch
        # at once (uniform bases + closed bridges), then update sequentially.
        free_batch = None
        site_moves = [m for m in self.moves if m != "collective"]
        if "free" in site_moves and self._active_idx.size:
            free_batch = free_loop_batch(self.beta, self.L, self.d,
                                         self._active_idx.size, self.rng)
        for slot, i in enumerate(self._active_idx):
            e_cur = None
            for kind in site_moves:
                if kind == "free":
                    cand = free_batch[slot]
                else:
                    cand = self._propose(i, kind)
                if cand is None:
                    continue
                self.attempted[i] += 1
                if e_cur is None:
                    e_cur = self.local_energy(i, self.pts[i])
                e_new = self.local_energy(i, cand)
                d_e = e_new - e_cur
                if d_e <= 0 or self.rng.random() < math.exp(-d_e):
                    self.pts[i] = cand
                    self.accepted[i] += 1
                    e_cur = e_new
        if "collective" in self.moves:
            self._collective_move()

    def _collective_move(self):
        """Rigid shift of all active loops at once.

        The difference-type potentials are invariant among the shifted
        sites, so only cross terms to frozen sites and to the boundary
        change; this mixes the slow collective sliding mode of tightly
        constrained models.
        """
        delta = self.rng.uniform(-self.rigid_step, self.rigid_step, self.d)
        self.collective_attempted += 1
        d_e = 0.0
        frozen = ~self.active
        for i in self._active_idx:
            cs_new = wrap(self.pts[i, : self.L] + delta)
            if self.bc_pts[i] is not None:
                s_new = self._slice_totals(cs_new, self.bc_pts[i])
                s_old = self._slice_totals(self.pts[i, : self.L], self.bc_pts[i])
                if np.isscalar(s_new):
                    return
                d_e += self.tau * float(self.bc_w[i] @ (s_new - s_old))
            if frozen.any() and self.nbr_idx[i].size:
                keep = frozen[self.nbr_idx[i]]
                if keep.any():
                    arr = self.pts[self.nbr_idx[i][keep]][:, : self.L]
                    s_new = self._slice_totals(cs_new, arr)
                    s_old = self._slice_totals(self.pts[i, : self.L], arr)
                    if np.isscalar(s_new):
                        return
                    d_e += self.tau * float(self.nbr_w[i][keep] @ (s_new - s_old))
        if d_e <= 0 or self.rng.random() < math.exp(-d_e):
            self.pts[self._active_idx] = wrap(self.pts[self._active_idx] + delta)
            self.collective_accepted += 1

    def configuration(self) -> PathConfiguration:
        return PathConfiguration({
            v: LoopPath(beta=self.beta, points=self.pts[i].copy(),
                        winding=np.zeros(self.d, dtype=int), is_loop=True)
            for i, v in enumerate(self.sites)})


def mcmc_run(model: ModelSpec, sweeps: int, rng, *, burn_in: int | None = None,
             thin: int = 1, record_paths: bool = False, init=None, moves=None,
             rigid_step: float = 0.1, adapt_steps: bool = True,
             zero_acceptance_window: int | None = None) -> McmcResult:
    """Run the Metropolis chain and return weight-free samples.

    Proposals are free-measure redraws mixed 1:1 with rigid shifts (for
    singular potentials: rigid shifts plus collective shifts plus
    bridge-segment redraws, since free proposals are almost surely
    infeasible).  burn_in defaults to 20% of sweeps.  The rigid step size
    adapts toward a workable acceptance rate during burn-in only, and is
    frozen afterwards so the recorded chain is a fixed Metropolis kernel.
    Recorded energies are full re-evaluations of the conditioned energy,
    so replays reproduce them bit for bit.
    """
    if burn_in is None:
        burn_in = sweeps // 5
    if burn_in >= sweeps:
        raise ValueError("burn_in must be smaller than sweeps")
    chain = _Chain(model, rng, init=init, moves=moves, rigid_step=rigid_step)
    rec_sweeps, rec_base, rec_energy, rec_paths = [], [], [], []
    accepted_window = 0
    adapt_every = 50
    adapt_before = 0
    adapt_attempt_before = 0
    for s in range(sweeps):
        before = int(chain.accepted.sum())
        chain.sweep()
        accepted_window += int(chain.accepted.sum()) - before
        if adapt_steps and s < burn_in and (s + 1) % adapt_every == 0:
            acc = int(chain.accepted.sum()) - adapt_before
            att = int(chain.attempted.sum()) - adapt_attempt_before
            adapt_before = int(chain.accepted.sum())
            adapt_attempt_before = int(chain.attempted.sum())
            rate = acc / max(att, 1)
            if rate < 0.15:
                chain.rigid_step = max(chain.rigid_step * 0.6, 1e-3)
            elif rate > 0.6:
                chain.rigid_step = min(chain.rigid_step * 1.4, 0.25)
        if zero_acceptance_window and (s + 1) % zero_acceptance_window == 0:
            if accepted_window == 0:
                raise ZeroAcceptanceError(
                    f"no accepted moves in {zero_acceptance_window} sweeps")
            accepted_window = 0
        if s >= burn_in and (s - burn_in) % thin == 0:
            rec_sweeps.append(s)
            rec_base.append(chain.pts[:, 0, :].copy())
            rec_energy.append(chain.total_energy())
            if record_paths:
                rec_paths.append(chain.pts.copy())
    acc = {v: (chain.accepted[i] / max(chain.attempted[i], 1))
           for i, v in enumerate(chain.sites)}
    base = np.asarray(rec_base)
    energies = np.asarray(rec_energy)
    autocorr = {}
    if len(energies) > 8:
        autocorr["energy"] = integrated_autocorr_time(energies)
        autocorr["cos_base"] = integrated_autocorr_time(
            np.cos(2 * np.pi * base[:, 0, 0]))
    coll = (chain.collective_accepted / chain.collective_attempted
            if chain.collective_attempted else None)
    return McmcResult(
        sites=chain.sites,
        sweep_index=np.asarray(rec_sweeps, dtype=int),
        base_points=base,
        energies=energies,
        paths=np.asarray(rec_paths) if record_paths else None,
        stats=ChainStats(sweeps=sweeps, burn_in=burn_in, acceptance=acc,
                         autocorr=autocorr, collective_acceptance=coll),
        beta=model.beta,
        L=model.L,
    )


# ---------------------------------------------------------------------------
# Exact small-system oracle
# ---------------------------------------------------------------------------

class TransferOracle:
    """Grid-exact slice-transfer contraction for models with <= 3 sites (d=1).

    One slice contributes the operator A[a, b] = (prod_sites p^{beta/L})
    * exp(-tau * u(a)) / m^{n_sites} on the composite grid, u being the
    slice interaction (in-model pairs twice, boundary pairs once).  The
    partition function, base-point marginals, and single-site reduced
    kernels come from the top eigenpairs of the symmetrized operator; the
    spectral tail after L-fold products is reported as `tail_bound`.
    """

    def __init__(self, model: ModelSpec, m: int, k_eigs: int = 24):
        if model.d != 1:
            raise ValueError("oracle supports d = 1 only")
        sites = model.sites
        if not 1 <= len(sites) <= 3:
            raise ValueError("oracle supports 1..3 sites")
        if m > 256:
            raise ValueError("grid too fine; m <= 256")
        self.model = model
        self.m = m
        self.sites = sites
        ns = len(sites)
        self.ns = ns
        tau = model.beta / model.L
        grid = np.arange(m) / m

        # Kinetic factor per site, grid weight folded in.
        self.P = heat_kernel_grid(m, model.beta / model.L) / m

        # Slice interaction on the composite grid.
        vgrid = model.potential.value(grid[:, None, None], grid[None, :, None])
        u = np.zeros((m,) * ns)
        reach = model.interaction.reach
        for a in range(ns):
            da = model.graph.distances_from(sites[a])
            for b in range(a + 1, ns):
                r = da.get(sites[b], -1)
                if 1 <= r <= reach:
                    j = model.interaction.coupling(r)
                    if j > 0:
                        # vgrid's axes land on the composite axes (a, b).
                        u = u + 2.0 * j * vgrid.reshape(
                            [m if i in (a, b) else 1 for i in range(ns)])
        bc = model.boundary if (model.boundary is not None and len(model.boundary)) else None
        if bc is not None:
            for i, v in enumerate(sites):
                dv = model.graph.distances_from(v)
                for w in bc.vertices():
                    r = dv.get(w, -1)
                    if not 1 <= r <= reach:
                        continue
                    j = model.interaction.coupling(r)
                    if j <= 0:
                        continue
                    path = bc[w].points
                    if not np.allclose(path, path[0]):
                        raise ValueError("oracle requires constant boundary loops")
                    field1 = model.potential.value(grid[:, None], path[0][None, :])
                    shape = [1] * ns
                    shape[i] = m
                    u = u + j * field1.reshape(shape)
        # +inf slice energies (hard cores) give weight-zero grid states.
        self.u = u
        self.tau = tau
        self._dh = np.exp(-0.5 * tau * u)

        dim = m**ns
        if ns == 1:
            mat = self._dh[:, None] * self.P * self._dh[None, :]
            vals, vecs = np.linalg.eigh(mat)
            order = np.argsort(vals)[::-1]
            k = min(k_eigs, dim)
            self.eigvals = vals[order[:k]]
            self.eigvecs = vecs[:, order[:k]]
        else:
            from scipy.sparse.linalg import LinearOperator, eigsh

            def matvec(v):
                t = v.reshape((m,) * ns) * self._dh
                for axis in range(ns):
                    t = np.moveaxis(
                        np.tensordot(self.P, t, axes=([1], [axis])), 0, axis)
                return (t * self._dh).ravel()

            op = LinearOperator((dim, dim), matvec=matvec, dtype=float)
            k = min(k_eigs, dim - 2)
            v0 = np.full(dim, 1.0 / math.sqrt(dim))
            vals, vecs = eigsh(op, k=k, which="LA", v0=v0)
            order = np.argsort(vals)[::-1]
            self.eigvals = vals[order]
            self.eigvecs = vecs[:, order]
        lam = np.clip(self.eigvals, 0.0, None)
        self.lam_l = lam ** model.L
        self.partition = float(self.lam_l.sum())
        self.tail_bound = float(
            (lam[-1] ** model.L) * (dim - lam.size)) if lam.size < dim else 0.0

    def base_point_masses(self, site) -> np.ndarray:
        """Cell probabilities of the base point at `site` (sums to 1)."""
        i = self.sites.index(site)
        sq = self.eigvecs**2  # diag of the symmetrized power
        masses = np.zeros(self.m)
        for k in range(self.eigvals.size):
            t = sq[:, k].reshape((self.m,) * self.ns)
            axes = tuple(a for a in range(self.ns) if a != i)
            masses += self.lam_l[k] * (t.sum(axis=axes) if axes else t)
        return masses / self.partition

    def rdmk(self, site) -> np.ndarray:
        """Reduced kernel F(x_a, x_b) for the one-site window at `site`."""
        if np.any(np.isinf(self.u)):
            raise ValueError("reduced kernels need finite slice energies")
        i = self.sites.index(site)
        m, ns = self.m, self.ns
        up = np.exp(+0.5 * self.tau * self.u)
        dn = np.exp(-0.5 * self.tau * self.u)
        num = np.zeros((m, m))
        for k in range(self.eigvals.size):
            v = self.eigvecs[:, k].reshape((m,) * ns)
            wa = np.moveaxis(v * dn, i, 0).reshape(m, -1)
            wb = np.moveaxis(v * up, i, 0).reshape(m, -1)
            num += self.lam_l[k] * (wa @ wb.T)
        return self.m * num / self.partition


def transfer_matrix_oracle(model: ModelSpec, m: int, k_eigs: int = 24) -> TransferOracle:
    """Exact contraction oracle for models with 1..3 sites on an m-point grid."""
    return TransferOracle(model, m, k_eigs=k_eigs)


# ---------------------------------------------------------------------------
# DLR self-consistency
# ---------------------------------------------------------------------------

@dataclass
class DlrReport:
    """Binned TV comparison of direct vs two-stage window marginals.

    `tv` compares the raw base-point marginals; `tv_relative` compares the
    window base point relative to a frozen reference site outside the
    resampled block, which stays sensitive when the absolute marginal is
    uniform by symmetry.
    """

    tv: TvReport
    tv_relative: TvReport
    reference_site: tuple
    inner: tuple
    mid: tuple
    n_direct: int
    n_two_stage: int

    @property
    def passed(self) -> bool:
        return self.tv.within_3_sigma and self.tv_relative.within_3_sigma


def dlr_check(model: ModelSpec, inner, mid, rng_seed: int, *, sweeps: int = 12000,
              thin: int = 10, cond_sweeps: int = 40, bins: int = 16,
              n_perm: int = 400) -> DlrReport:
    """Two-stage resampling check of the conditional structure.

    Stage one samples the outside of `mid` from a full-volume chain; stage
    two re-randomizes the `mid` block and re-equilibrates it with the rest
    frozen, using the same local conditional energies as the full chain.
    The window marginal over `inner` from the two-stage scheme is compared
    against an independent full chain by binned TV with a permutation null.
    """
    inner = tuple(inner)
    mid = tuple(mid)
    sites = model.sites
    if not set(inner) <= set(mid) <= set(sites):
        raise ValueError("need inner within mid within the model region")
    idx = {v: i for i, v in enumerate(sites)}
    inner_idx = [idx[v] for v in inner]
    mid_mask = np.zeros(len(sites), dtype=bool)
    for v in mid:
        mid_mask[idx[v]] = True
    # Reference for the relative coordinate: the in-model site farthest
    # from the window among those left frozen in stage two.
    frozen = [v for v in sites if v not in mid]
    if not frozen:
        raise ValueError("mid must leave at least one site frozen")
    ref = max(frozen, key=lambda v: (model.graph.distance(inner[0], v), v))
    ref_idx = idx[ref]

    direct = mcmc_run(model, sweeps, stream(rng_seed, 0), thin=thin)
    outer = mcmc_run(model, sweeps, stream(rng_seed, 1), thin=thin,
                     record_paths=True)

    two_stage = []
    two_stage_rel = []
    cond_rng = stream(rng_seed, 2)
    cond = _Chain(model, cond_rng, init=outer.configuration(0), active=mid_mask)
    for k in range(outer.paths.shape[0]):
        cond.pts[:] = outer.paths[k]
        # Fresh block start, then conditional re-equilibration.
        for i in np.nonzero(mid_mask)[0]:
            cond.pts[i] = cond._draw_free_loop()
        for _ in range(cond_sweeps):
            cond.sweep()
        two_stage.append([cond.pts[i, 0, 0] for i in inner_idx])
        two_stage_rel.append([cond.pts[i, 0, 0] - cond.pts[ref_idx, 0, 0]
                              for i in inner_idx])
    two_stage = np.asarray(two_stage)
    two_stage_rel = np.mod(np.asarray(two_stage_rel), 1.0)

    a = direct.base_points[:, inner_idx, 0].ravel()
    b = two_stage.ravel()
    a_rel = np.mod(direct.base_points[:, inner_idx, 0]
                   - direct.base_points[:, [ref_idx], 0], 1.0).ravel()
    b_rel = two_stage_rel.ravel()
    tv = tv_permutation_test(a, b, stream(rng_seed, 3), bins=bins, n_perm=n_perm)
    tv_rel = tv_permutation_test(a_rel, b_rel, stream(rng_seed, 4), bins=bins,
                                 n_perm=n_perm)
    return DlrReport(tv=tv, tv_relative=tv_rel, reference_site=ref, inner=inner,
                     mid=mid, n_direct=a.size, n_two_stage=b.size)
