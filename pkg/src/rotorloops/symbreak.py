"""Singular-potential symmetry-breaking experiments.

Cooled boundaries freeze the outer annulus at a single point; tilted
boundaries wind the frozen base points along the first lattice axis in
steps of eta times the hard-core width.  Arc observables measure the
probability that the center base point falls in a circle arc, and the
eta scan locates the tilt at which that probability hits a target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import LoopPath, PathConfiguration
from .energy import InteractionProfile, PotentialSpec
from .gibbs import ModelSpec, constant_configuration, mcmc_run
from .graph import Graph, build_lattice
from .stats import mean_with_autocorr_error


@dataclass(frozen=True)
class BoundarySpec:
    """Frozen boundary condition over the outer annulus.

    kind 'cooled': every boundary loop constant at x_star.
    kind 'tilted': base points x_star + j1 * eta * theta_hc mod 1 (j1 the
    first coordinate of the boundary site), constant in time.
    """

    kind: str
    x_star: float = 0.0
    eta: float = 0.0
    theta_hc: float = 0.2

    def __post_init__(self):
        if self.kind not in ("cooled", "tilted"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "tilted" and not 0.0 <= self.eta <= 1.0:
            raise ValueError("tilt fraction eta must lie in [0, 1]")

    def base_point(self, vertex) -> float:
        if self.kind == "cooled" or self.eta == 0.0:
            return self.x_star % 1.0
        return (self.x_star + vertex[0] * self.eta * self.theta_hc) % 1.0


def build_boundary(spec: BoundarySpec, g: Graph, beta: float, L: int) -> PathConfiguration:
    """Constant loops over the graph's boundary annulus."""
    if not g.boundary:
        raise ValueError("graph carries no boundary annulus")
    return PathConfiguration({
        v: LoopPath.constant(np.array([spec.base_point(v)]), beta, L)
        for v in g.boundary})


def tilted_interior_start(spec: BoundarySpec, model: ModelSpec) -> PathConfiguration:
    """Feasible ladder start: interior loops frozen at the tilted base points."""
    return PathConfiguration({
        v: LoopPath.constant(np.array([spec.base_point(v)]), model.beta, model.L)
        for v in model.sites})


def hard_core_model(n: int, beta: float, L: int, bspec: BoundarySpec, *,
                    theta_hc: float = 0.2, metric: str = "sup",
                    strength: float = 1.0) -> ModelSpec:
    """Square-box model with the singular cosine potential and frozen boundary."""
    g = build_lattice("square_box", n, metric=metric)
    pot = PotentialSpec.singular_cosine(theta_hc)
    inter = InteractionProfile.nearest_neighbor(strength)
    bc = build_boundary(bspec, g, beta, L)
    return ModelSpec(graph=g, beta=beta, L=L, potential=pot, interaction=inter,
                     boundary=bc, d=1)


@dataclass
class ArcObservable:
    """Estimated probability that the site's base point lies in the arc."""

    center: float
    half_width: float
    site: tuple
    probability: float
    stderr: float
    n_samples: int

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability out of range")


def arc_membership(x, center: float, half_width: float) -> np.ndarray:
    """Indicator of circle-distance membership in the arc."""
    delta = np.abs(np.mod(np.asarray(x) - center + 0.5, 1.0) - 0.5)
    return delta <= half_width


def arc_probability(model: ModelSpec, center: float, half_width: float,
                    sweeps: int, rng, *, site=None, init=None, thin: int = 2,
                    burn_in: int | None = None) -> ArcObservable:
    """MC estimate of P(base point at `site` in the arc), with
    autocorrelation-corrected standard error."""
    site = site if site is not None else _center_site(model)
    if init is None and not model.potential.smooth:
        init = _default_singular_start(model)
    run = mcmc_run(model, sweeps, rng, thin=thin, init=init, burn_in=burn_in)
    i = model.sites.index(site)
    hits = arc_membership(run.base_points[:, i, 0], center, half_width).astype(float)
    p, err = mean_with_autocorr_error(hits)
    return ArcObservable(center=center, half_width=half_width, site=site,
                         probability=min(max(p, 0.0), 1.0), stderr=err,
                         n_samples=hits.size)


def _center_site(model: ModelSpec):
    if model.graph.origin in model.graph.interior:
        return model.graph.origin
    return model.sites[0]


def _default_singular_start(model: ModelSpec) -> PathConfiguration:
    if model.boundary is None or not len(model.boundary):
        return constant_configuration(model, np.zeros(model.d))
    first = next(iter(model.boundary.vertices()))
    return constant_configuration(model, model.boundary[first].points[0])


@dataclass
class EtaScanResult:
    """Bisection outcome for the tilt hitting the target arc probability."""

    eta: float | None
    probability: float | None
    stderr: float | None
    target: float
    history: list
    bracketed: bool
    message: str = ""


def eta_scan(model_factory, target: float, rng_seed_stream, *, tolerance: float = 0.05,
             sweeps: int = 4000, max_iter: int = 12, eta_lo: float = 0.02,
             eta_hi: float = 1.0, center: float | None = None,
             half_width: float = 0.005, sigma_cap: float | None = None,
             refine_factor: int = 3) -> EtaScanResult:
    """Bisection on the tilt fraction until the arc probability hits target.

    model_factory(eta) must return a ready ModelSpec with the tilted
    boundary at that eta; rng_seed_stream(k) supplies a fresh generator
    per evaluation.  Stops when |p - target| <= tolerance + 3 * stderr
    (with stderr additionally below sigma_cap when given, so a noisy
    estimate cannot fake a hit); reports a non-bracketing response instead
    of guessing.  When the iteration budget runs out, the bracket midpoint
    is re-measured with refine_factor times the sweeps.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")

    evals = 0

    def measure(eta, n_sweeps=sweeps):
        nonlocal evals
        model, init, c = _factory_unpack(model_factory(eta), center)
        obs = arc_probability(model, c, half_width, n_sweeps,
                              rng_seed_stream(evals), init=init)
        evals += 1
        return obs

    def on_target(obs):
        if abs(obs.probability - target) > tolerance + 3.0 * obs.stderr:
            return False
        return sigma_cap is None or obs.stderr <= sigma_cap

    history = []
    lo, hi = eta_lo, eta_hi
    obs_lo = measure(lo)
    obs_hi = measure(hi)
    history += [(lo, obs_lo.probability, obs_lo.stderr),
                (hi, obs_hi.probability, obs_hi.stderr)]
    for eta, obs in ((lo, obs_lo), (hi, obs_hi)):
        if on_target(obs):
            return EtaScanResult(eta=eta, probability=obs.probability,
                                 stderr=obs.stderr, target=target,
                                 history=history, bracketed=True,
                                 message="bracket endpoint already on target")
    if not (obs_lo.probability < target < obs_hi.probability
            or obs_hi.probability < target < obs_lo.probability):
        return EtaScanResult(eta=None, probability=None, stderr=None,
                             target=target, history=history, bracketed=False,
                             message="response does not bracket the target")
    increasing = obs_hi.probability > obs_lo.probability
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        obs = measure(mid)
        history.append((mid, obs.probability, obs.stderr))
        if on_target(obs):
            return EtaScanResult(eta=mid, probability=obs.probability,
                                 stderr=obs.stderr, target=target,
                                 history=history, bracketed=True)
        if (obs.probability < target) == increasing:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    obs = measure(mid, sweeps * refine_factor)
    history.append((mid, obs.probability, obs.stderr))
    return EtaScanResult(eta=mid, probability=obs.probability, stderr=obs.stderr,
                         target=target, history=history, bracketed=True,
                         message="refined midpoint after iteration budget")


def _factory_unpack(made, center):
    """model_factory may return a ModelSpec or (ModelSpec, init, arc center)."""
    if isinstance(made, ModelSpec):
        return made, None, (0.0 if center is None else center)
    model, init, c = made
    return model, init, (c if center is None else center)


def feasible_everywhere(model: ModelSpec, cfg: PathConfiguration) -> bool:
    """True iff every interacting pair satisfies the hard core at all slices."""
    from .gibbs import log_unnormalized_density

    return math.isfinite(log_unnormalized_density(model, cfg))
