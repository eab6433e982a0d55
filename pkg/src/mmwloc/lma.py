"""Levenberg-Marquardt minimization of a weighted sum of squares."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import LmDiverged, MmwlocError


@dataclass
class LmaResult:
    x: np.ndarray
    cost: float
    iterations: int
    accepted: int
    damping: float
    costs: list = field(default_factory=list)     # cost after every accepted step, initial first
    converged: bool = True


def whitening(weight) -> np.ndarray | None:
    """Matrix ``L`` with ``L L^T = W`` (negative eigenvalues clipped); ``None`` for identity."""
    if weight is None:
        return None
    W = np.asarray(getattr(weight, "entries", weight), dtype=float)
    W = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(W)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def numeric_jacobian(fun: Callable, x: np.ndarray, r0: np.ndarray | None = None) -> np.ndarray:
    """Central differences with steps scaled to each parameter."""
    x = np.asarray(x, dtype=float)
    h = 1e-6 * np.maximum(np.abs(x), 1e-3)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h[i]))
    return np.column_stack(cols)


def lma_minimize(residual_fn: Callable, weight, x0, jac: Callable | None = None,
                 max_iter: int = 200, gtol: float = 1e-10, xtol: float = 1e-12,
                 damping0: float = 1e-3) -> LmaResult:
    """Minimize ``r(x)^T W r(x)`` by damped Gauss-Newton steps.

    The damping starts at ``damping0``, grows tenfold after a rejected step
    and shrinks tenfold after an accepted one; the normal equations use
    Marquardt's diagonal scaling.  ``jac`` returns ``d r / d x``; central
    differences are used when it is omitted.  Residual functions may raise
    :class:`MmwlocError` for infeasible points, which counts as a rejected
    step.
    """
    L = whitening(weight)
    jac = jac or (lambda x: numeric_jacobian(residual_fn, x))

    def weighted(x):
        r = np.asarray(residual_fn(x), dtype=float)
        return r if L is None else L.T @ r

    x = np.array(x0, dtype=float)
    rw = weighted(x)
    cost = float(rw @ rw)
    if not np.isfinite(cost):
        raise LmDiverged("non-finite cost at the starting point")
    lam = damping0
    costs = [cost]
    accepted = 0
    it = 0
    converged = False
    Jw = None
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged = True
            break
        if Jw is None:
            J = np.asarray(jac(x), dtype=float)
            Jw = J if L is None else L.T @ J
            A = Jw.T @ Jw
            g = Jw.T @ rw
            diag = np.maximum(np.diag(A), 1e-30 * max(np.max(np.diag(A)), 1e-300))
        if np.max(np.abs(g)) < gtol:
            converged = True
            break
        try:
            step = np.linalg.solve(A + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        try:
            rw_new = weighted(x + step)
            new_cost = float(rw_new @ rw_new)
        except MmwlocError:
            new_cost = np.inf
        if np.isfinite(new_cost) and new_cost < cost:
            x = x + step
            rw, cost = rw_new, new_cost
            costs.append(cost)
            accepted += 1
            lam = max(lam / 10, 1e-15)
            Jw = None
            if np.linalg.norm(step) < xtol * (xtol + np.linalg.norm(x)):
                converged = True
                break
        else:
            predicted = -(g @ step + 0.5 * step @ A @ step)
            if np.isfinite(new_cost) and predicted <= 1e-14 * cost:
                converged = True      # no representable decrease left
                break
            lam *= 10
            if lam > 1e16:
                converged = accepted > 0
                break
    if accepted == 0 and not converged:
        raise LmDiverged(f"no step decreased the cost in {it} iterations")
    return LmaResult(x, cost, it, accepted, lam, costs, converged)
