"""Derivative-free minimization (Nelder-Mead downhill simplex)."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from marketflow.errors import DomainError

REFLECTION = 1.0
EXPANSION = 2.0
CONTRACTION = 0.5
SHRINK = 0.5


@dataclass(frozen=True, eq=False)
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    n_evaluations: int
    trace: list[float] = field(default_factory=list, repr=False)

    # allows ``x, f, ok, n = simplex_minimize(...)``
    def __iter__(self):
        return iter((self.x, self.fun, self.converged, self.iterations))


def _initial_simplex(x0: np.ndarray, step) -> np.ndarray:
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for k in range(n):
        if step is not None:
            delta = np.broadcast_to(np.asarray(step, dtype=float), (n,))[k]
        elif x0[k] != 0:
            delta = 0.05 * x0[k]
        else:
            delta = 0.00025
        simplex[k + 1, k] += delta
    return simplex


def simplex_minimize(
    objective: Callable[[np.ndarray], float],
    initial: Sequence[float],
    tolerance: float = 1e-8,
    max_iterations: int = 2000,
    *,
    initial_step: float | Sequence[float] | None = None,
    xtol: float | None = None,
) -> SimplexResult:
    """Minimize ``objective`` with the Nelder-Mead method.

    Standard coefficients are used (reflection 1, expansion 2, contraction
    0.5, shrink 0.5). The search stops once the spread between the best and
    worst vertex values drops below ``tolerance`` and every vertex lies within
    ``xtol`` (default ``tolerance``) of the best one, or after
    ``max_iterations``. The size check catches simplices that straddle a
    minimum symmetrically, where the value spread is zero.

    Non-finite objective values met during the search are treated as
    ``+inf`` so the simplex moves away from them.

    Raises:
        DomainError: the objective is not finite at ``initial``.
    """
    if xtol is None:
        xtol = tolerance
    x0 = np.atleast_1d(np.asarray(initial, dtype=float)).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise DomainError("initial point must be a non-empty vector")
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        value = float(objective(x))
        return value if math.isfinite(value) else math.inf

    f0 = f(x0.copy())
    if not math.isfinite(f0):
        raise DomainError("objective is not finite at the initial point")

    simplex = _initial_simplex(x0, initial_step)
    values = np.empty(x0.size + 1)
    values[0] = f0
    for k in range(1, x0.size + 1):
        values[k] = f(simplex[k].copy())

    trace: list[float] = []
    converged = False
    iterations = 0
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append(float(values[0]))
        size = np.max(np.abs(simplex[1:] - simplex[0]))
        if values[-1] - values[0] < tolerance and size <= xtol:
            converged = True
            break
        if iterations >= max_iterations:
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + REFLECTION * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + EXPANSION * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue

        if fr < values[-1]:
            # outside contraction
            xc = centroid + CONTRACTION * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + CONTRACTION * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue

        best = simplex[0]
        for k in range(1, simplex.shape[0]):
            simplex[k] = best + SHRINK * (simplex[k] - best)
            values[k] = f(simplex[k].copy())

    return SimplexResult(
        x=simplex[0].copy(),
        fun=float(values[0]),
        converged=converged,
        iterations=iterations,
        n_evaluations=n_evals,
        trace=trace,
    )
