"""Three iterative solvers sharing one trace format.

``solve_eg_anderson1`` is the extragradient method with a one-step Anderson
extrapolation: each iteration runs a backtracking search for a step t
satisfying the extragradient compatibility condition

    t <H(y_half) - H(x), y_half - y_plus>
        <= (mu/2) (||x - y_half||^2 + ||y_half - y_plus||^2),

then either takes the plain corrector point y_plus (EG step) or, when the
two-evaluation residual has shrunk below both the one-evaluation residual
and a decaying budget omega * sigma^(-tau), an extrapolated combination
alpha*x + (1-alpha)*y_plus with the safeguard |alpha| <= M (AA step).

``solve_eg`` is the same loop with the extrapolation gate disabled
(omega = 0), i.e. the classical two-projection extragradient method.

``solve_anderson1`` is depth-one Anderson mixing applied directly to the
fixed-point map G(x) = P(x - t H(x)) with a constant step and no
safeguard; it can diverge on hard instances, which the divergence guard
reports as a status instead of looping.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .core import VIProblem, natural_residual

__all__ = [
    "Status",
    "SolverConfig",
    "IterationRecord",
    "StepInternals",
    "SolveResult",
    "AndersonMemory",
    "LineSearchStalledError",
    "line_search",
    "anderson_coefficient",
    "eg_anderson1_step",
    "solve_eg_anderson1",
    "solve_eg",
    "solve_anderson1",
    "SOLVERS",
    "solve",
    "DIVERGENCE_LIMIT",
]

# Residual beyond this is reported as Diverged; NaN residuals count too.
DIVERGENCE_LIMIT = 1e12

# Guard for the extrapolation denominator ||f_tilde - f||^2; it is
# nonzero whenever the gate holds, but float underflow forces an EG step.
DEGENERATE_DENOM = 1e-300


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DIVERGED = "Diverged"
    LINE_SEARCH_STALLED = "LineSearchStalled"


class LineSearchStalledError(RuntimeError):
    """Backtracking exceeded the cap; the point is numerically at a
    solution or the operator is pathological at this point."""


@dataclass
class SolverConfig:
    """All solver parameters.

    ``gamma`` is the initial (or, for the Anderson baseline, the fixed)
    step; ``omega``, ``safeguard_m``, ``tau`` control the extrapolation
    gate and safeguard; ``rho`` and ``mu`` drive the backtracking search.
    Setting ``constant_step`` disables the line search entirely and uses
    that step at every iteration (appropriate when t * Lipschitz < 1).
    """

    gamma: float = 1.0
    omega: float = 30.0
    safeguard_m: float = 5000.0
    tau: float = 0.6
    rho: float = 0.8
    mu: float = 0.5
    tol: float = 1e-8
    max_iter: int = 10000
    constant_step: Optional[float] = None
    max_backtracks: int = 60
    check_lemmas: bool = False
    collect_internals: bool = False

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if self.omega < 0.0:
            raise ValueError("omega must be nonnegative")
        if not self.safeguard_m > 0.0:
            raise ValueError("safeguard_m must be positive")
        if not self.tau > 0.5:
            raise ValueError("tau must exceed 1/2")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.constant_step is not None and not self.constant_step > 0.0:
            raise ValueError("constant_step must be positive when set")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


@dataclass
class IterationRecord:
    """One row of the solve trace.

    Step fields (``t_k``, ``backtracks``, ``alpha``, ``step_kind``) are
    None on the terminal row, which records the residual that stopped the
    loop. ``residual`` is the unit-step natural residual at x_k, measured
    before the step. ``sigma`` is the gate counter before the update.
    """

    k: int
    residual: float
    t_k: Optional[float]
    backtracks: Optional[int]
    alpha: Optional[float]
    step_kind: Optional[str]  # "AA" | "EG" | None
    sigma: int
    h_evals_cum: int
    elapsed_ns: int


@dataclass(eq=False)
class StepInternals:
    """Per-step vectors and norms kept for invariant checking."""

    x: np.ndarray
    y_half: np.ndarray
    y_plus: np.ndarray
    x_next: np.ndarray
    f_norm: float
    f_tilde_norm: float


@dataclass(eq=False)
class AndersonMemory:
    """Depth-one mixing memory: the previous iterate and its fixed-point
    residual G(x) - x."""

    x_prev: np.ndarray
    f_prev: np.ndarray


@dataclass(eq=False)
class SolveResult:
    x_final: np.ndarray
    status: Status
    iterations: int
    trace: List[IterationRecord]
    h_evals: int
    projections: int
    sandwich_violations: int = 0
    descent_violations: int = 0
    fejer_violations: int = 0
    internals: Optional[List[StepInternals]] = None


def anderson_coefficient(f: np.ndarray, f_tilde: np.ndarray) -> Optional[float]:
    """Unconstrained minimizer of alpha -> ||alpha f + (1-alpha) f_tilde||.

    Returns None when ||f_tilde - f||^2 underflows, signalling the caller
    to fall back to a plain step.
    """
    diff = f_tilde - f
    denom = float(np.dot(diff, diff))
    if denom < DEGENERATE_DENOM:
        return None
    return float(np.dot(f_tilde, diff)) / denom


def line_search(problem: VIProblem, x: np.ndarray, cfg: SolverConfig):
    """Backtrack t = gamma * rho^m until the compatibility condition holds.

    Both projected points are recomputed at every candidate step; H(x) is
    evaluated once and reused since it does not depend on t. Returns
    ``(t, y_half, y_plus, m)`` for the smallest admissible m.
    """
    hx = problem.evaluate(x)
    t = cfg.gamma
    for m in range(cfg.max_backtracks + 1):
        y_half = problem.project(x - t * hx)
        hy = problem.evaluate(y_half)
        y_plus = problem.project(x - t * hy)
        lhs = t * float(np.dot(hy - hx, y_half - y_plus))
        d1 = y_half - x
        d2 = y_half - y_plus
        rhs = 0.5 * cfg.mu * (float(np.dot(d1, d1)) + float(np.dot(d2, d2)))
        if lhs <= rhs:
            return t, y_half, y_plus, m
        t *= cfg.rho
    raise LineSearchStalledError(
        f"no admissible step after {cfg.max_backtracks} backtracks "
        f"(last candidate t={t / cfg.rho:.3e})"
    )


def eg_anderson1_step(
    problem: VIProblem,
    x: np.ndarray,
    sigma: int,
    cfg: SolverConfig,
    k: int = 0,
    residual: float = float("nan"),
):
    """One iteration of the accelerated extragradient loop.

    Returns ``(x_next, sigma_next, record, internals)``. ``k`` and
    ``residual`` are threaded through into the record; the loop fills in
    the cumulative counters afterwards.
    """
    if cfg.constant_step is not None:
        t = cfg.constant_step
        y_half = problem.project(x - t * problem.evaluate(x))
        y_plus = problem.project(x - t * problem.evaluate(y_half))
        m = 0
    else:
        t, y_half, y_plus, m = line_search(problem, x, cfg)

    f = y_half - x
    f_tilde = y_plus - x
    f_norm = float(np.linalg.norm(f))
    f_tilde_norm = float(np.linalg.norm(f_tilde))

    # Both gate inequalities are strict; ties fall through to the EG step.
    alpha = None
    if f_tilde_norm < f_norm and f_tilde_norm < cfg.omega * sigma ** (-cfg.tau):
        alpha = anderson_coefficient(f, f_tilde)

    if alpha is not None and abs(alpha) <= cfg.safeguard_m:
        x_next = alpha * x + (1.0 - alpha) * y_plus
        sigma_next = sigma + 1
        kind = "AA"
    else:
        x_next = y_plus
        sigma_next = sigma
        kind = "EG"

    record = IterationRecord(
        k=k,
        residual=float(residual),
        t_k=float(t),
        backtracks=m,
        alpha=alpha,
        step_kind=kind,
        sigma=sigma,
        h_evals_cum=0,
        elapsed_ns=0,
    )
    internals = StepInternals(
        x=x,
        y_half=y_half,
        y_plus=y_plus,
        x_next=x_next,
        f_norm=f_norm,
        f_tilde_norm=f_tilde_norm,
    )
    return x_next, sigma_next, record, internals


class _Loop:
    """Shared bookkeeping for the solve loops: stopping tests, trace,
    counters, and the terminal record."""

    def __init__(self, problem: VIProblem, x0, cfg: SolverConfig):
        self.problem = problem
        self.cfg = cfg
        self.t0 = time.perf_counter_ns()
        self.evals0 = problem.eval_count
        self.projs0 = problem.proj_count
        x = np.asarray(x0, dtype=np.float64)
        if not problem.feasible_set.contains(x):
            x = problem.project(x)
        self.x = x
        self.trace: List[IterationRecord] = []
        self.internals: Optional[List[StepInternals]] = (
            [] if cfg.collect_internals else None
        )
        self.k = 0
        self.residual = float("nan")

    def stop_status(self) -> Optional[Status]:
        self.residual = natural_residual(self.problem, self.x)
        if self.residual <= self.cfg.tol:
            return Status.CONVERGED
        if not math.isfinite(self.residual) or self.residual > DIVERGENCE_LIMIT:
            return Status.DIVERGED
        if self.k >= self.cfg.max_iter:
            return Status.MAX_ITERATIONS
        return None

    def push(self, record: IterationRecord, info: StepInternals):
        record.h_evals_cum = self.problem.eval_count - self.evals0
        record.elapsed_ns = time.perf_counter_ns() - self.t0
        self.trace.append(record)
        if self.internals is not None:
            self.internals.append(info)
        self.x = info.x_next
        self.k += 1

    def finish(self, status: Status, sigma: int, **violations) -> SolveResult:
        self.trace.append(
            IterationRecord(
                k=self.k,
                residual=self.residual,
                t_k=None,
                backtracks=None,
                alpha=None,
                step_kind=None,
                sigma=sigma,
                h_evals_cum=self.problem.eval_count - self.evals0,
                elapsed_ns=time.perf_counter_ns() - self.t0,
            )
        )
        return SolveResult(
            x_final=self.x,
            status=status,
            iterations=self.k,
            trace=self.trace,
            h_evals=self.problem.eval_count - self.evals0,
            projections=self.problem.proj_count - self.projs0,
            internals=self.internals,
            **violations,
        )


def solve_eg_anderson1(problem: VIProblem, x0, cfg: SolverConfig) -> SolveResult:
    """Run the accelerated extragradient loop until the natural residual
    drops to ``cfg.tol``, the iteration cap or divergence guard trips, or
    the line search stalls.

    With ``cfg.check_lemmas`` the loop also verifies, each iteration, the
    residual sandwich bound and (when the problem carries a known
    solution) the per-step descent and almost-monotone distance
    inequalities, counting violations on the result.
    """
    loop = _Loop(problem, x0, cfg)
    sigma = 1
    aa_steps = 0
    sandwich = descent = fejer = 0
    x_star = problem.known_solution if cfg.check_lemmas else None
    shrink = math.sqrt(cfg.mu / (2.0 - cfg.mu))
    status = None
    while True:
        status = loop.stop_status()
        if status is not None:
            break
        try:
            x_next, sigma_next, record, info = eg_anderson1_step(
                problem, loop.x, sigma, cfg, k=loop.k, residual=loop.residual
            )
        except LineSearchStalledError:
            status = Status.LINE_SEARCH_STALLED
            break
        if cfg.check_lemmas:
            if info.f_tilde_norm > (1.0 + shrink) * info.f_norm + 1e-10:
                sandwich += 1
            if info.f_tilde_norm < (1.0 - shrink) * info.f_norm - 1e-10:
                sandwich += 1
            if x_star is not None:
                dx2 = float(np.dot(loop.x - x_star, loop.x - x_star))
                dy = info.y_plus - x_star
                half = info.y_half - loop.x
                corr = info.y_plus - info.y_half
                bound = dx2 - (1.0 - cfg.mu) * (
                    float(np.dot(half, half)) + float(np.dot(corr, corr))
                )
                if float(np.dot(dy, dy)) > bound + 1e-9:
                    descent += 1
                eps = 0.0
                if record.step_kind == "AA":
                    eps = (
                        cfg.safeguard_m
                        * (cfg.safeguard_m + 1.0)
                        * cfg.omega**2
                        * (1.0 + aa_steps) ** (-2.0 * cfg.tau)
                    )
                dn = x_next - x_star
                if float(np.dot(dn, dn)) > dx2 + eps + 1e-9:
                    fejer += 1
        if record.step_kind == "AA":
            aa_steps += 1
        loop.push(record, info)
        sigma = sigma_next
    return loop.finish(
        status,
        sigma,
        sandwich_violations=sandwich,
        descent_violations=descent,
        fejer_violations=fejer,
    )


def solve_eg(problem: VIProblem, x0, cfg: SolverConfig) -> SolveResult:
    """Plain extragradient: the same loop with the extrapolation gate
    forced shut, so every step is an EG step."""
    return solve_eg_anderson1(problem, x0, replace(cfg, omega=0.0))


def solve_anderson1(problem: VIProblem, x0, cfg: SolverConfig) -> SolveResult:
    """Depth-one Anderson mixing on G(x) = P(x - t H(x)) at a fixed step.

    The step is ``cfg.constant_step`` when set, else ``cfg.gamma``; there
    is no line search and no safeguard. The first iteration takes the
    plain fixed-point step; afterwards the new point is the
    residual-minimizing affine combination of the last two G values,
    falling back to the plain step when the residual difference
    degenerates.
    """
    t = cfg.constant_step if cfg.constant_step is not None else cfg.gamma
    loop = _Loop(problem, x0, cfg)
    sigma = 1
    memory: Optional[AndersonMemory] = None
    status = None
    while True:
        status = loop.stop_status()
        if status is not None:
            break
        x = loop.x
        gx = problem.project(x - t * problem.evaluate(x))
        f = gx - x
        alpha = None
        if memory is not None:
            # theta weights the older G value; same closed form as the
            # accelerated solver's coefficient with (f_prev, f) in the
            # roles of the residual pair.
            alpha = anderson_coefficient(memory.f_prev, f)
        if alpha is None:
            x_next = gx
            kind = "EG"
            sigma_next = sigma
        else:
            g_prev = memory.x_prev + memory.f_prev
            x_next = alpha * g_prev + (1.0 - alpha) * gx
            kind = "AA"
            sigma_next = sigma + 1
        record = IterationRecord(
            k=loop.k,
            residual=loop.residual,
            t_k=float(t),
            backtracks=0,
            alpha=alpha,
            step_kind=kind,
            sigma=sigma,
            h_evals_cum=0,
            elapsed_ns=0,
        )
        info = StepInternals(
            x=x,
            y_half=gx,
            y_plus=gx,
            x_next=x_next,
            f_norm=float(np.linalg.norm(f)),
            f_tilde_norm=float(np.linalg.norm(f)),
        )
        memory = AndersonMemory(x_prev=x, f_prev=f)
        loop.push(record, info)
        sigma = sigma_next
    return loop.finish(status, sigma)


SOLVERS = {
    "eg_anderson1": solve_eg_anderson1,
    "anderson1": solve_anderson1,
    "eg": solve_eg,
}


def solve(problem: VIProblem, x0, cfg: SolverConfig, method: str = "eg_anderson1") -> SolveResult:
    try:
        fn = SOLVERS[method]
    except KeyError:
        raise ValueError(f"unknown solver {method!r}; choose from {sorted(SOLVERS)}")
    return fn(problem, x0, cfg)
