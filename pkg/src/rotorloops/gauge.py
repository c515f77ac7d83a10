"""Site-dependent gauge ramps and the decay certification of their energy cost.

The ramp applies the full shift near the origin, tapers it through the
annulus between the plateau radius and the outer radius with a slowly
varying profile, and vanishes outside.  The quadratic deformation cost of
the ramp decays like the reciprocal of the taper normalization, which is
what forces shift invariance of smooth-potential ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import PathConfiguration, shift_path
from .energy import COSINE_BOUND, InteractionProfile, PotentialSpec
from .torus import GroupElement, wrap


def decay_rate(u) -> np.ndarray | float:
    """Taper speed profile: 1 on (-inf, 2], then 1/(u ln u)."""
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.ones_like(u)
    mask = u > 2.0
    if mask.any():
        um = u[mask]
        out[mask] = 1.0 / (um * np.log(um))
    return float(out[0]) if scalar else out


def decay_integral(b: float) -> float:
    """Integral of the taper speed from 0 to b (closed form).

    Equals b for b <= 2 and 2 + ln ln b - ln ln 2 beyond.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    if b <= 2.0:
        return float(b)
    return 2.0 + math.log(math.log(b)) - math.log(math.log(2.0))


def _rate_integral(a: float, b: float) -> float:
    """Integral of the taper speed over [a, b] for 0 <= a <= b."""
    if b <= 2.0:
        return b - a
    if a >= 2.0:
        return math.log(math.log(b)) - math.log(math.log(a))
    return (2.0 - a) + math.log(math.log(b)) - math.log(math.log(2.0))


def taper(a: float, b: float) -> float:
    """Normalized tail of the taper: 1 for a <= 0, 0 for a >= b, else
    the remaining speed integral over [a, b] divided by the full one."""
    if b <= 0:
        raise ValueError("b must be positive")
    if a <= 0:
        return 1.0
    if a >= b:
        return 0.0
    return _rate_integral(a, b) / decay_integral(b)


@dataclass(eq=False)
class GaugeProfile:
    """Per-site ramp factors for a shift tapered between two radii.

    values maps each vertex to a factor in [0, 1]: 1 on the plateau ball
    of radius r_bar, tapering through the annulus, 0 at distance >= n.
    """

    n: int
    r_bar: int
    theta: GroupElement
    values: dict

    def factor(self, v) -> float:
        return self.values.get(v, 0.0)


def gauge_profile(g, n: int, r_bar: int, theta: GroupElement) -> GaugeProfile:
    """Build the ramp factors on a graph around its origin."""
    if r_bar >= n:
        raise ValueError("plateau radius must be smaller than the outer radius")
    dists = g.distances_from(g.origin) if g.is_finite else g._bfs_from(g.origin, max_depth=n)
    values = {}
    for v, dv in dists.items():
        if dv <= r_bar:
            values[v] = 1.0
        elif dv >= n:
            values[v] = 0.0
        else:
            values[v] = taper(dv - r_bar, n - r_bar)
    return GaugeProfile(n=n, r_bar=r_bar, theta=theta, values=values)


def apply_gauge(profile: GaugeProfile, cfg: PathConfiguration,
                sign: int = 1) -> PathConfiguration:
    """Rigidly shift each vertex's path by sign * theta * ramp(vertex).

    Vertices beyond the outer radius are unchanged; sign=-1 applies the
    inverse family, so apply_gauge(+1) then apply_gauge(-1) restores the
    configuration.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    out = {}
    for v, p in cfg.items():
        c = profile.factor(v)
        if c == 0.0:
            out[v] = p
        else:
            out[v] = shift_path(profile.theta.scaled(sign * c), p)
    return PathConfiguration(out)


def deformation_energy(g, interaction: InteractionProfile, n: int, r_bar: int,
                       theta_norm: float) -> float:
    """Quadratic cost of the ramp: |theta|^2 * sum over ordered pairs of
    J(d(j,j')) * (ramp(j) - ramp(j'))^2, j inside the outer ball, j'
    anywhere within the interaction reach."""
    profile = gauge_profile(g, n, r_bar, GroupElement.circle(0.0))
    dists = g.distances_from(g.origin) if g.is_finite else g._bfs_from(
        g.origin, max_depth=n + interaction.reach)
    inside = [v for v, dv in dists.items() if dv <= n]
    reach = interaction.reach
    total = 0.0
    for v in inside:
        uv = profile.factor(v)
        for r in range(1, reach + 1):
            j = interaction.coupling(r)
            if j <= 0:
                continue
            for w in g.sphere(v, r):
                dw = dists.get(w)
                uw = profile.factor(w) if (dw is not None and dw <= n) else 0.0
                total += j * (uv - uw) ** 2
    return theta_norm**2 * total


def psi(g, interaction: InteractionProfile, n: int, r_bar: int,
        theta_norm: float) -> float:
    """Alias for deformation_energy (the ramp's quadratic cost)."""
    return deformation_energy(g, interaction, n, r_bar, theta_norm)


@dataclass
class TaylorReport:
    """Second-order shift bound check over random tuples."""

    trials: int
    violations: int
    max_ratio: float
    worst: tuple | None

    @property
    def passed(self) -> bool:
        return self.violations == 0


def taylor_bound_check(spec: PotentialSpec, trials: int, rng, *,
                       constant: float = COSINE_BOUND,
                       d: int = 1) -> TaylorReport:
    """Check |V(x+tu, x'+tu') + V(x-tu, x'-tu') - 2V(x,x')| <= C t^2 (u-u')^2.

    The two-sided shift cancels first-order terms; for the cosine
    potential the explicit constant C = 4 pi^2 is sharp enough to hold
    with zero violations.
    """
    if not spec.smooth:
        raise ValueError("the bound applies to smooth potentials")
    max_ratio = 0.0
    violations = 0
    worst = None
    for _ in range(trials):
        x = rng.random(d)
        xp = rng.random(d)
        t = rng.uniform(-0.5, 0.5)
        u = rng.uniform(0.0, 1.0)
        up = rng.uniform(0.0, 1.0)
        plus = spec.value(wrap(x + t * u), wrap(xp + t * up))
        minus = spec.value(wrap(x - t * u), wrap(xp - t * up))
        base = spec.value(x, xp)
        lhs = abs(float(plus + minus - 2.0 * base))
        rhs = constant * (t * (u - up)) ** 2
        if lhs > rhs + 1e-12:
            violations += 1
            worst = (tuple(x), tuple(xp), t, u, up, lhs, rhs)
        ratio = lhs / rhs if rhs > 0 else 0.0
        max_ratio = max(max_ratio, ratio)
    return TaylorReport(trials=trials, violations=violations,
                        max_ratio=max_ratio, worst=worst)


@dataclass
class ConvexityReport:
    """Outcome of the midpoint / energy-cost / threshold inequality chain."""

    n_configs: int
    midpoint_ok: int
    energy_bound_ok: int
    full_ok_given_threshold: int
    c_energy: float
    psi_value: float
    threshold_factor: float          # a * exp(-C psi / 2)
    threshold_n: int | None          # smallest sweep n with factor >= 1
    threshold_sweep: dict
    witnesses: list

    @property
    def passed(self) -> bool:
        return (self.midpoint_ok == self.n_configs
                and self.energy_bound_ok == self.n_configs)


def convexity_chain_check(model, profile: GaugeProfile, configurations, a: float,
                          *, n_sweep=(8, 16, 32, 64),
                          lattice_builder=None) -> ConvexityReport:
    """Certify the gauge inequality chain on sampled configurations.

    For each configuration checks (i) the exponential midpoint inequality
    for the gauged pair, (ii) the second-order energy bound
    |h(g.) + h(g^-1 .) - 2 h(.)| <= C * Psi with the explicit cosine
    constant C = 4 pi^2 beta, and (iii) that the full convex combination
    dominates whenever a * exp(-C Psi / 2) >= 1.  The smallest radius in
    n_sweep reaching that threshold is reported (None if not reached).
    """
    from .gibbs import log_unnormalized_density

    if a <= 1.0:
        raise ValueError("a must exceed 1")
    if not model.potential.smooth:
        raise ValueError("the chain applies to smooth potentials")
    configurations = list(configurations)
    c_energy = COSINE_BOUND * model.beta
    theta_norm = float(np.linalg.norm(np.atleast_1d(profile.theta.shift)))
    psi_val = deformation_energy(model.graph, model.interaction, profile.n,
                                 profile.r_bar, theta_norm)
    factor = a * math.exp(-0.5 * c_energy * psi_val)

    midpoint_ok = energy_ok = full_ok = 0
    witnesses = []
    for cfg in configurations:
        h0 = -log_unnormalized_density(model, cfg)
        hp = -log_unnormalized_density(model, apply_gauge(profile, cfg, +1))
        hm = -log_unnormalized_density(model, apply_gauge(profile, cfg, -1))
        mid = 0.5 * math.exp(-hp) + 0.5 * math.exp(-hm) >= math.exp(-0.5 * (hp + hm))
        second = abs(hp + hm - 2.0 * h0) <= c_energy * psi_val + 1e-9
        full = (0.5 * a * math.exp(-hp) + 0.5 * a * math.exp(-hm)
                >= math.exp(-h0) * (1.0 - 1e-12))
        midpoint_ok += mid
        energy_ok += second
        if factor >= 1.0:
            full_ok += full
            if not full:
                witnesses.append(("full", h0, hp, hm))
        if not mid:
            witnesses.append(("midpoint", h0, hp, hm))
        if not second:
            witnesses.append(("energy", h0, hp, hm, c_energy * psi_val))

    sweep = {}
    threshold_n = None
    builder = lattice_builder or (lambda nn: _default_box(model, nn))
    for nn in sorted(n_sweep):
        g_n = builder(nn)
        p_n = deformation_energy(g_n, model.interaction, nn, profile.r_bar,
                                 theta_norm)
        f_n = a * math.exp(-0.5 * c_energy * p_n)
        sweep[nn] = f_n
        if threshold_n is None and f_n >= 1.0:
            threshold_n = nn
    return ConvexityReport(
        n_configs=len(configurations),
        midpoint_ok=midpoint_ok,
        energy_bound_ok=energy_ok,
        full_ok_given_threshold=full_ok,
        c_energy=c_energy,
        psi_value=psi_val,
        threshold_factor=factor,
        threshold_n=threshold_n,
        threshold_sweep=sweep,
        witnesses=witnesses,
    )


def _default_box(model, n: int):
    from .graph import build_lattice

    return build_lattice("square_box", n, metric=model.graph.metric)


def decay_sweep(interaction: InteractionProfile, r_bar: int, theta_norm: float,
                n_values=(8, 16, 32, 64), metric: str = "graph"):
    """Tabulate (n, Q(n - r_bar), Psi(n), Psi * Q) over growing boxes."""
    from .graph import build_lattice

    rows = []
    for n in n_values:
        g = build_lattice("square_box", n, metric=metric)
        q = decay_integral(n - r_bar)
        p = deformation_energy(g, interaction, n, r_bar, theta_norm)
        rows.append((n, q, p, p * q))
    return rows
