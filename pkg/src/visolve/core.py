"""Core machinery for variational inequalities over simple convex sets.

A problem instance couples an operator H with a feasible set Omega and asks
for a point x* in Omega with <H(x*), y - x*> >= 0 for every feasible y.
This module provides the two closed-form projection sets used by the
benchmark families (axis-aligned box and nonnegative orthant), the
projected residual maps built from one and two operator evaluations, the
natural residual used as the stopping quantity, and a power-iteration
estimate of a dense matrix 2-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "Box",
    "NonnegativeOrthant",
    "FeasibleSet",
    "VIProblem",
    "ResidualPair",
    "project",
    "compute_F",
    "compute_F_tilde",
    "natural_residual",
    "spectral_norm",
]


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a nonempty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch: expected length {dim}, got {v.size}")
    return v


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box {x : lo <= x <= hi} with componentwise clamp projection."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lo)
        hi = as_vector(self.hi, lo.size)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x) -> bool:
        x = as_vector(x, self.dim)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def project(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        return np.minimum(np.maximum(x, self.lo), self.hi)


@dataclass(frozen=True, eq=False)
class NonnegativeOrthant:
    """The set {x : x >= 0}; projection zeroes out negative components."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.n

    def contains(self, x) -> bool:
        x = as_vector(x, self.dim)
        return bool(np.all(x >= 0.0))

    def project(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        return np.maximum(x, 0.0)


FeasibleSet = Union[Box, NonnegativeOrthant]


def project(feasible_set: FeasibleSet, x) -> np.ndarray:
    """Exact Euclidean projection of ``x`` onto the set."""
    return feasible_set.project(x)


class VIProblem:
    """An evaluatable operator together with its feasible set.

    All operator evaluations and projections used by the solvers run
    through :meth:`evaluate` / :meth:`project` so the work counters stay
    honest. The counters are the only mutable state: share instances
    read-only, but give each concurrent solve its own handle.
    """

    def __init__(
        self,
        h: Callable[[np.ndarray], np.ndarray],
        feasible_set: FeasibleSet,
        lipschitz: Optional[float] = None,
        known_solution=None,
        data=None,
    ):
        if lipschitz is not None and not (lipschitz >= 0.0):
            raise ValueError("lipschitz constant must be nonnegative")
        self.h = h
        self.feasible_set = feasible_set
        self.lipschitz = lipschitz
        self.known_solution = (
            None if known_solution is None else as_vector(known_solution, feasible_set.dim)
        )
        self.data = data
        self.eval_count = 0
        self.proj_count = 0

    @property
    def dim(self) -> int:
        return self.feasible_set.dim

    def evaluate(self, x) -> np.ndarray:
        """Apply the operator; charges exactly one evaluation."""
        self.eval_count += 1
        return np.asarray(self.h(x), dtype=np.float64)

    def project(self, x) -> np.ndarray:
        """Project onto the feasible set; charges one projection."""
        self.proj_count += 1
        return self.feasible_set.project(x)


@dataclass(eq=False)
class ResidualPair:
    """Projected points and residuals at a base point x for a step t.

    ``y_half`` is the single-evaluation projected point P(x - t H(x)) and
    ``f = y_half - x``. When the two-evaluation quantities are present,
    ``y_plus = P(x - t H(y_half))`` and ``f_tilde = y_plus - x``.
    """

    y_half: np.ndarray
    f: np.ndarray
    y_plus: Optional[np.ndarray] = None
    f_tilde: Optional[np.ndarray] = None


def _check_step(t: float) -> float:
    t = float(t)
    if not (t > 0.0) or not math.isfinite(t):
        raise ValueError(f"step size must be a positive finite real, got {t}")
    return t


def compute_F(problem: VIProblem, x, t: float) -> ResidualPair:
    """One projected step from x: y_half = P(x - t H(x)), f = y_half - x."""
    t = _check_step(t)
    x = as_vector(x, problem.dim)
    y_half = problem.project(x - t * problem.evaluate(x))
    return ResidualPair(y_half=y_half, f=y_half - x)


def compute_F_tilde(problem: VIProblem, x, t: float, y_half) -> ResidualPair:
    """Second projected step reusing y_half: y_plus = P(x - t H(y_half))."""
    t = _check_step(t)
    x = as_vector(x, problem.dim)
    y_half = as_vector(y_half, problem.dim)
    y_plus = problem.project(x - t * problem.evaluate(y_half))
    return ResidualPair(y_half=y_half, f=y_half - x, y_plus=y_plus, f_tilde=y_plus - x)


def natural_residual(problem: VIProblem, x) -> float:
    """||x - P(x - H(x))||, the unit-step residual; zero exactly at solutions.

    Evaluates H afresh (one evaluation, one projection) so benchmark work
    counts include the stopping test.
    """
    return float(np.linalg.norm(compute_F(problem, x, 1.0).f))


def spectral_norm(w) -> float:
    """Largest singular value of a square dense matrix via power iteration.

    Iterates on W^T W from a fixed seeded start vector until the estimate
    is stable to a relative 1e-10 or 500 iterations, whichever comes
    first. Returns 0.0 for the zero matrix.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ValueError("matrix entries must be finite")
    n = w.shape[0]
    v = np.random.default_rng(0x5EED).standard_normal(n)
    v /= np.linalg.norm(v)
    sigma_prev = 0.0
    sigma = 0.0
    for _ in range(500):
        z = w @ v
        sigma = float(np.linalg.norm(z))
        if sigma == 0.0:
            return 0.0
        u = w.T @ z
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(sigma - sigma_prev) <= 1e-10 * sigma:
            break
        sigma_prev = sigma
    return sigma
