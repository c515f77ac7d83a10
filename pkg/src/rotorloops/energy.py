"""Interaction profiles, pair potentials, and energy functionals over loops.

Conventions fixed here and used consistently by every sampler and
estimator in the package:

* `config_energy` sums over ordered vertex pairs inside a region (each
  unordered pair contributes twice), with self-terms excluded (the
  coupling at distance 0 is defined to be 0).
* `boundary_energy` counts each inner-outer pair once.
* The slice integral uses the left-endpoint rule on the common grid; for
  closed loops this coincides with the trapezoid rule by periodicity.
* +inf potential values short-circuit: any hard-core violation gives the
  configuration weight zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .torus import TWO_PI, wrap_delta

#: Uniform bound on the cosine potential and its first two derivatives.
COSINE_BOUND = 4.0 * math.pi**2

#: Float slack on the hard-core feasibility test: configurations exactly on
#: the constraint boundary (the frozen tilt ladders) must not be rejected
#: for one-ulp rounding of the wrapped differences.
HARD_CORE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Pair potential on the torus.

    kinds: 'zero' (non-interacting), 'cosine' (smooth, shift invariant),
    'singular_cosine' (cosine inside a hard core of circle-distance
    theta_hc, +inf outside), 'tabulated' (periodic linear interpolation of
    a difference table; d = 1 only).
    """

    kind: str
    theta_hc: float | None = None
    table: np.ndarray | None = None
    v_bar: float = COSINE_BOUND
    smooth: bool = True

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls(kind="zero", v_bar=0.0, smooth=True)

    @classmethod
    def cosine(cls) -> "PotentialSpec":
        return cls(kind="cosine", v_bar=COSINE_BOUND, smooth=True)

    @classmethod
    def singular_cosine(cls, theta_hc: float) -> "PotentialSpec":
        if not 0.0 < theta_hc < 0.25:
            raise ValueError("hard-core width must lie in (0, 1/4)")
        return cls(kind="singular_cosine", theta_hc=theta_hc,
                   v_bar=COSINE_BOUND, smooth=False)

    @classmethod
    def tabulated(cls, values, v_bar: float) -> "PotentialSpec":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("table must be a 1D array of at least 2 values")
        return cls(kind="tabulated", table=vals, v_bar=v_bar, smooth=True)

    def value(self, x, y):
        """V(x, y) broadcast over leading axes; trailing axis is the coordinate."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])
        delta = wrap_delta(x - y)
        if self.kind == "tabulated":
            # Periodic linear interpolation in the wrapped difference.
            m = self.table.size
            t = np.mod(delta[..., 0], 1.0) * m
            lo = np.floor(t).astype(int) % m
            frac = t - np.floor(t)
            return (1.0 - frac) * self.table[lo] + frac * self.table[(lo + 1) % m]
        val = -np.cos(TWO_PI * delta).sum(axis=-1)
        if self.kind == "cosine":
            return val
        if self.kind == "singular_cosine":
            rho = np.abs(delta).max(axis=-1)
            return np.where(rho <= self.theta_hc + HARD_CORE_SLACK, val, np.inf)
        raise ValueError(f"unknown potential kind {self.kind!r}")


def eval_V(spec: PotentialSpec, x, y):
    """Potential value at a pair of torus points (scalar form of spec.value)."""
    out = spec.value(x, y)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class InteractionProfile:
    """Distance-keyed coupling J(r): non-negative, non-increasing, J(0) = 0."""

    couplings: np.ndarray  # couplings[r] for r = 0..range
    #: distances beyond len(couplings)-1 couple with strength 0

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("couplings must be a 1D array")
        c = c.copy()
        c[0] = 0.0  # no self-interaction
        if np.any(c < 0):
            raise ValueError("couplings must be non-negative")
        if c.size > 2 and np.any(np.diff(c[1:]) > 1e-12):
            raise ValueError("couplings must be non-increasing in distance")
        object.__setattr__(self, "couplings", c)

    @classmethod
    def nearest_neighbor(cls, strength: float = 1.0) -> "InteractionProfile":
        return cls(np.array([0.0, strength]))

    @property
    def reach(self) -> int:
        """Largest distance with a nonzero coupling."""
        nz = np.nonzero(self.couplings)[0]
        return int(nz[-1]) if nz.size else 0

    def coupling(self, r):
        r = np.asarray(r)
        out = np.where((r >= 0) & (r < self.couplings.size),
                       self.couplings[np.clip(r, 0, self.couplings.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def row_sum(self, g, center) -> float:
        """sum_j' J(d(center, j')) over the graph."""
        total = 0.0
        for r in range(1, self.reach + 1):
            total += self.coupling(r) * len(g.sphere(center, r))
        return total

    def j_bar(self, g, centers=None) -> float:
        """Supremum of coupling row sums over sampled centers."""
        centers = centers if centers is not None else _default_centers(g)
        return max(self.row_sum(g, c) for c in centers)

    def j_star(self, g, centers=None) -> float:
        """Supremum of distance^2-weighted row sums over sampled centers."""
        centers = centers if centers is not None else _default_centers(g)
        best = 0.0
        for c in centers:
            total = 0.0
            for r in range(1, self.reach + 1):
                total += self.coupling(r) * r * r * len(g.sphere(c, r))
            best = max(best, total)
        return best


def _default_centers(g):
    if g.is_finite:
        step = max(1, len(g.vertices) // 8)
        return list(g.vertices[::step]) + [g.origin]
    return [g.origin]


def slice_sum(spec: PotentialSpec, pts1: np.ndarray, pts2: np.ndarray) -> float:
    """Sum of V over the first L slice points of two paths (left endpoints)."""
    vals = spec.value(pts1[..., :-1, :], pts2[..., :-1, :])
    return vals.sum(axis=-1)


def pair_energy(profile: InteractionProfile, spec: PotentialSpec, dist: int,
                p1, p2) -> float:
    """Interaction energy of two paths: J(dist) * (beta/L) * sum_k V(p1_k, p2_k).

    Left-endpoint quadrature on the shared slice grid; +inf propagates.
    """
    j = profile.coupling(dist)
    if j == 0.0:
        return 0.0
    if p1.L != p2.L or p1.beta != p2.beta:
        raise ValueError("paths must share beta and slice count")
    s = slice_sum(spec, p1.points, p2.points)
    if not np.isfinite(s):
        return math.inf
    return float(j * (p1.beta / p1.L) * s)


def config_energy(g, profile: InteractionProfile, spec: PotentialSpec,
                  region, cfg) -> float:
    """Energy of a region: ordered-pair sum (2x each unordered pair), no self-terms."""
    region = list(region)
    for v in region:
        if v not in cfg:
            raise KeyError(f"configuration missing vertex {v}")
    total = 0.0
    reach = profile.reach
    for a in range(len(region)):
        u = region[a]
        du = g.distances_from(u) if g.is_finite else None
        for b in range(a + 1, len(region)):
            v = region[b]
            r = du.get(v, -1) if du is not None else g.distance(u, v)
            if r < 1 or r > reach:
                continue
            e = pair_energy(profile, spec, r, cfg[u], cfg[v])
            if math.isinf(e):
                return math.inf
            total += 2.0 * e
    return total


def boundary_energy(g, profile: InteractionProfile, spec: PotentialSpec,
                    inner_cfg, outer_cfg) -> float:
    """Cross energy between disjoint regions: each inner-outer pair counted once."""
    inner = list(inner_cfg.vertices()) if hasattr(inner_cfg, "vertices") else list(inner_cfg)
    outer = list(outer_cfg.vertices()) if hasattr(outer_cfg, "vertices") else list(outer_cfg)
    overlap = set(inner) & set(outer)
    if overlap:
        raise ValueError(f"regions overlap: {sorted(overlap)[:4]}")
    total = 0.0
    reach = profile.reach
    for u in inner:
        du = g.distances_from(u) if g.is_finite else None
        for v in outer:
            r = du.get(v, -1) if du is not None else g.distance(u, v)
            if r < 1 or r > reach:
                continue
            e = pair_energy(profile, spec, r, inner_cfg[u], outer_cfg[v])
            if math.isinf(e):
                return math.inf
            total += e
    return total
