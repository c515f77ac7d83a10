"""Flat torus geometry: group shifts, circle distance, and the heat kernel.

Points of the d-torus are coordinate arrays reduced mod 1.  The Brownian
transition density is the Gaussian image sum over winding integers,
truncated at a radius chosen from the Gaussian tail.  All functions are
pure and broadcast over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap(x):
    """Reduce coordinates to [0, 1)."""
    return np.mod(x, 1.0)


def wrap_delta(x):
    """Reduce a displacement to the symmetric representative in [-1/2, 1/2)."""
    return np.mod(np.asarray(x, dtype=float) + 0.5, 1.0) - 0.5


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Additive shift on the torus: x -> x + theta @ A mod 1.

    theta lives on a d'-torus; A is a d' x d rational matrix of full row
    rank, so the induced shift vector is theta @ A reduced mod 1.
    """

    theta: np.ndarray
    A: np.ndarray | None = None

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", wrap(theta))
        if self.A is not None:
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            if A.shape[0] != theta.shape[0]:
                raise ValueError("theta length must match rows of A")
            if np.linalg.matrix_rank(A) != A.shape[0]:
                raise ValueError("A must have full row rank")
            object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.theta.shape[0] if self.A is None else self.A.shape[1]

    @property
    def shift(self) -> np.ndarray:
        """The induced d-dimensional shift vector, reduced mod 1."""
        if self.A is None:
            return self.theta
        return wrap(self.theta @ self.A)

    def inverse(self) -> "GroupElement":
        return GroupElement(wrap(-self.theta), self.A)

    def scaled(self, c: float) -> "GroupElement":
        """Element with shift scaled by c (used by gauge ramps)."""
        return GroupElement(wrap(c * self.theta), self.A)

    @classmethod
    def circle(cls, theta: float) -> "GroupElement":
        """Rotation of the unit circle (d = d' = 1)."""
        return cls(np.array([theta], dtype=float))

    @classmethod
    def identity(cls, d: int = 1) -> "GroupElement":
        return cls(np.zeros(d))


def act(g: GroupElement, x):
    """Apply the shift g to torus point(s) x."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.dim:
        raise ValueError(f"dimension mismatch: point d={x.shape[-1]}, group d={g.dim}")
    return wrap(x + g.shift)


def act_inv(g: GroupElement, x):
    """Apply the inverse shift."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.dim:
        raise ValueError(f"dimension mismatch: point d={x.shape[-1]}, group d={g.dim}")
    return wrap(x - g.shift)


def torus_distance(x, y):
    """Distance on the torus: per-coordinate circle distance, max over coordinates.

    Each coordinate contributes min(|dx|, 1 - |dx|) in [0, 1/2]; for d > 1
    the coordinates are aggregated with max.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    per = np.abs(wrap_delta(x - y))
    return per.max(axis=-1)


def default_truncation(beta: float, tol: float = 1e-12) -> int:
    """Winding truncation radius with image-sum tail below tol.

    The omitted mass is bounded by exp(-(N-1)^2 / (2 beta)); the default
    N = ceil(1 + 6 sqrt(beta)) keeps it under 1e-12 at any beta.
    """
    n = math.ceil(1.0 + 6.0 * math.sqrt(beta))
    while math.exp(-((n - 1.0) ** 2) / (2.0 * beta)) > tol:
        n += 1
    return n


@dataclass(frozen=True)
class HeatKernelParams:
    """Time length and winding truncation for the image-sum heat kernel."""

    beta: float
    trunc: int
    tol: float = 1e-12

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        tail = math.exp(-((self.trunc - 1.0) ** 2) / (2.0 * self.beta))
        if tail > self.tol:
            raise ValueError(
                f"truncation tail {tail:.3e} above tolerance {self.tol:.1e}; "
                f"increase trunc beyond {self.trunc}"
            )

    @classmethod
    def for_beta(cls, beta: float, tol: float = 1e-12) -> "HeatKernelParams":
        return cls(beta=beta, trunc=default_truncation(beta, tol), tol=tol)


def _as_params(p) -> HeatKernelParams:
    if isinstance(p, HeatKernelParams):
        return p
    return HeatKernelParams.for_beta(float(p))


def _image_sum_1d(delta, beta: float, trunc: int):
    """1D transition density: (2 pi beta)^{-1/2} sum_n exp(-(delta+n)^2 / 2 beta)."""
    delta = wrap_delta(delta)
    ns = np.arange(-trunc, trunc + 1, dtype=float)
    z = delta[..., None] + ns
    return np.exp(-0.5 * z * z / beta).sum(axis=-1) / math.sqrt(TWO_PI * beta)


def _image_sum_grad_1d(delta, beta: float, trunc: int):
    """Derivative of the 1D image sum with respect to delta."""
    delta = wrap_delta(delta)
    ns = np.arange(-trunc, trunc + 1, dtype=float)
    z = delta[..., None] + ns
    return (-(z / beta) * np.exp(-0.5 * z * z / beta)).sum(axis=-1) / math.sqrt(
        TWO_PI * beta
    )


def heat_kernel(x, y, params) -> np.ndarray | float:
    """Brownian transition density on the torus from x to y in time beta.

    The flat metric factorizes, so the d-dimensional kernel is the product
    of 1D image sums over the coordinates.  Broadcasts over leading axes;
    the trailing axis is the coordinate axis.
    """
    p = _as_params(params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    delta = x - y
    vals = _image_sum_1d(delta, p.beta, p.trunc)
    out = vals.prod(axis=-1)
    return float(out) if out.ndim == 0 else out


def heat_kernel_grad(x, y, params) -> np.ndarray:
    """Gradient of heat_kernel in x (term-wise differentiation of the sum)."""
    p = _as_params(params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    delta = x - y
    vals = _image_sum_1d(delta, p.beta, p.trunc)
    grads = _image_sum_grad_1d(delta, p.beta, p.trunc)
    d = delta.shape[-1]
    out = np.empty(np.broadcast_shapes(x.shape, y.shape), dtype=float)
    for i in range(d):
        others = [vals[..., j] for j in range(d) if j != i]
        prod = np.ones_like(grads[..., i])
        for o in others:
            prod = prod * o
        out[..., i] = grads[..., i] * prod
    return out


def grid_points(m: int) -> np.ndarray:
    """Regular torus grid a/m, a = 0..m-1 (midpoint weights 1/m)."""
    return np.arange(m, dtype=float) / m


def heat_kernel_grid(m: int, params) -> np.ndarray:
    """m x m matrix of 1D kernel values p(x_a, x_b) on the regular grid."""
    p = _as_params(params)
    g = grid_points(m)
    return _image_sum_1d(g[:, None] - g[None, :], p.beta, p.trunc)
