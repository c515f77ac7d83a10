"""Brownian bridges and loops on the torus at slice resolution.

A path is stored as L+1 points at times k*beta/L.  Sampling is exact in
the finite-dimensional distributions: the winding vector is drawn from
the Gaussian image weights once per bridge, then a Euclidean bridge to
the lifted endpoint is built by sequential conditioning and projected
mod 1.  Endpoints are exact and never resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .torus import GroupElement, act, default_truncation, wrap, wrap_delta


@dataclass(frozen=True, eq=False)
class LoopPath:
    """Time-discretized path: points has shape (L+1, d), slice spacing beta/L."""

    beta: float
    points: np.ndarray
    winding: np.ndarray
    is_loop: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("points must have shape (L+1, d) with L >= 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "winding", np.asarray(self.winding, dtype=int))

    @property
    def L(self) -> int:
        return self.points.shape[0] - 1

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.points[0]

    @property
    def y(self) -> np.ndarray:
        return self.points[-1]

    @classmethod
    def constant(cls, x, beta: float, L: int) -> "LoopPath":
        """Loop frozen at a single point (used for cooled boundaries)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pts = np.repeat(wrap(x)[None, :], L + 1, axis=0)
        return cls(beta=beta, points=pts, winding=np.zeros(x.size, dtype=int),
                   is_loop=True)


class PathConfiguration:
    """Map from vertices to paths with a common beta and slice count."""

    def __init__(self, paths: dict):
        self._paths = dict(paths)
        if self._paths:
            first = next(iter(self._paths.values()))
            for p in self._paths.values():
                if p.L != first.L or p.beta != first.beta:
                    raise ValueError("all paths must share beta and L")
            self.beta = first.beta
            self.L = first.L
        else:
            self.beta = None
            self.L = None

    def vertices(self):
        return self._paths.keys()

    def __getitem__(self, v) -> LoopPath:
        return self._paths[v]

    def __contains__(self, v) -> bool:
        return v in self._paths

    def __len__(self) -> int:
        return len(self._paths)

    def items(self):
        return self._paths.items()

    def concat(self, other: "PathConfiguration") -> "PathConfiguration":
        """Concatenation of configurations over disjoint regions."""
        overlap = set(self._paths) & set(other._paths)
        if overlap:
            raise ValueError(f"regions overlap: {sorted(overlap)[:4]}")
        merged = dict(self._paths)
        merged.update(other._paths)
        return PathConfiguration(merged)

    def shifted(self, g: GroupElement) -> "PathConfiguration":
        return PathConfiguration({v: shift_path(g, p) for v, p in self.items()})


def _winding_weights(delta: np.ndarray, beta: float, trunc: int):
    """Image weights exp(-(delta+n)^2 / 2 beta), per coordinate."""
    ns = np.arange(-trunc, trunc + 1, dtype=float)
    z = delta[..., None] + ns
    w = np.exp(-0.5 * z * z / beta)
    return ns, w / w.sum(axis=-1, keepdims=True)


def sample_windings(x, y, beta: float, size: int, rng) -> np.ndarray:
    """Draw winding vectors for bridges x -> y with the Gaussian image weights."""
    delta = wrap_delta(np.asarray(y, float) - np.asarray(x, float))
    trunc = default_truncation(beta)
    ns, probs = _winding_weights(delta, beta, trunc)
    d = delta.shape[-1]
    out = np.empty((size, d), dtype=int)
    u = rng.random((size, d))
    cdf = np.cumsum(probs, axis=-1)
    for i in range(d):
        out[:, i] = ns[np.searchsorted(cdf[i], u[:, i])]
    return out


def _euclidean_bridge_interior(start, disp, beta: float, L: int, normals):
    """Euclidean bridge points at slice times via sequential conditioning.

    start: (..., d); disp: (..., d) total displacement; normals: standard
    normals of shape (..., L-1, d).  Returns (..., L+1, d) lifted points.
    """
    start = np.asarray(start, dtype=float)
    disp = np.asarray(disp, dtype=float)
    shape = np.broadcast_shapes(start.shape, disp.shape)
    pts = np.empty(shape[:-1] + (L + 1,) + shape[-1:], dtype=float)
    pts[..., 0, :] = start
    end = start + disp
    dt = beta / L
    cur = np.broadcast_to(start, shape).copy()
    for k in range(1, L):
        remain = beta - (k - 1) * dt
        mean = cur + (end - cur) * (dt / remain)
        var = dt * (remain - dt) / remain
        cur = mean + math.sqrt(var) * normals[..., k - 1, :]
        pts[..., k, :] = cur
    pts[..., L, :] = end
    return pts


def sample_bridge_batch(x, y, beta: float, L: int, size: int, rng,
                        *, return_lifted: bool = False):
    """Vectorized draws from the normalized torus bridge law x -> y.

    Returns wrapped points of shape (size, L+1, d) and the winding vectors
    (size, d); with return_lifted also the unwrapped Euclidean paths.
    """
    if L < 1:
        raise ValueError("need at least one slice")
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x.shape[-1]
    windings = sample_windings(x, y, beta, size, rng)
    disp = wrap_delta(y - x) + windings
    if L == 1:
        lifted = np.empty((size, 2, d))
        lifted[:, 0, :] = x
        lifted[:, 1, :] = x + disp
    else:
        normals = rng.standard_normal((size, L - 1, d))
        lifted = _euclidean_bridge_interior(np.broadcast_to(x, (size, d)), disp,
                                            beta, L, normals)
    pts = wrap(lifted)
    # Endpoints exact: wrap of the stored values, never re-derived.
    pts[:, 0, :] = wrap(x)
    pts[:, -1, :] = wrap(y)
    if return_lifted:
        return pts, windings, lifted
    return pts, windings


def sample_bridge(x, y, beta: float, L: int, rng) -> LoopPath:
    """One exact draw from the torus bridge law between fixed endpoints."""
    pts, windings = sample_bridge_batch(x, y, beta, L, 1, rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    is_loop = bool(np.all(wrap(x) == wrap(y)))
    return LoopPath(beta=beta, points=pts[0], winding=windings[0], is_loop=is_loop)


def sample_loop(x, beta: float, L: int, rng) -> LoopPath:
    """Closed bridge x -> x (a loop of the reference measure)."""
    pts, windings = sample_bridge_batch(x, x, beta, L, 1, rng)
    return LoopPath(beta=beta, points=pts[0], winding=windings[0], is_loop=True)


def free_loop_batch(beta: float, L: int, d: int, size: int, rng):
    """Loops of the reference measure: uniform base points, closed bridges.

    Returns (size, L+1, d) wrapped points.  These are exact normalized
    draws; the constant reference mass per loop is handled analytically by
    the estimators.
    """
    bases = rng.random((size, d))
    if L == 1:
        pts = np.repeat(bases[:, None, :], 2, axis=1)
        return pts
    windings = sample_windings(np.zeros(d), np.zeros(d), beta, size, rng)
    normals = rng.standard_normal((size, L - 1, d))
    lifted = _euclidean_bridge_interior(bases, windings.astype(float), beta, L,
                                        normals)
    pts = wrap(lifted)
    pts[:, 0, :] = bases
    pts[:, -1, :] = bases
    return pts


def shift_path(g: GroupElement, p: LoopPath) -> LoopPath:
    """Rigidly shift every slice of a path by the group element."""
    return LoopPath(beta=p.beta, points=act(g, p.points), winding=p.winding,
                    is_loop=p.is_loop)
