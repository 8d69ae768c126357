"""Damped least squares (Levenberg-Marquardt) for small dense problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    residuals: np.ndarray
    jac: np.ndarray
    iterations: int
    converged: bool
    message: str
    rank: int
    cost_history: list = field(default_factory=list)


def numeric_jacobian(fun, x, r0=None, rel_step=1e-7):
    """Central-difference Jacobian; parameters are expected to be O(1)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def levenberg_marquardt(
    fun,
    x0,
    jac=None,
    xtol: float = 1e-10,
    ftol: float = 1e-10,
    max_iter: int = 500,
    lam0: float = 1e-3,
    lam_max: float = 1e16,
    rcond: float = 1e-8,
) -> LMResult:
    """Minimize 0.5 * ||fun(x)||^2.

    Marquardt scaling: the damping term is lam * diag(J^T J).  Iteration
    stops when an accepted step changes the cost by less than ``ftol``
    relative, or the step is below ``xtol`` relative to ``x``.  Only accepted
    steps enter ``cost_history``, so it never increases.

    ``rank`` counts singular values of the final Jacobian above
    ``rcond * s_max``; the default sits above central-difference noise.
    """
    jac = jac or (lambda x, r: numeric_jacobian(fun, x, r))
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = lam0
    converged = False
    message = "maximum iterations reached"
    it = 0
    j = jac(x, r)
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        a = j.T @ j
        g = j.T @ r
        d = np.diag(a).copy()
        d[d <= 0] = 1.0
        accepted = False
        while lam <= lam_max:
            try:
                step = np.linalg.solve(a + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new)
            small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
            if np.isfinite(cost_new) and cost_new <= cost:
                rel_drop = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop <= ftol or small_step:
                    converged = True
                    message = "relative cost change below tolerance" if rel_drop <= ftol else "step below tolerance"
                break
            if small_step:
                # no representable downhill step left: at the minimum to working precision
                converged, message = True, "step below tolerance"
                break
            lam *= 10.0
        if converged:
            break
        if not accepted:
            message = "damping exceeded its limit without a downhill step"
            break
        j = jac(x, r)
    j = jac(x, r)
    sv = np.linalg.svd(j, compute_uv=False)
    rank = int(np.sum(sv > rcond * sv[0])) if sv.size and sv[0] > 0 else 0
    return LMResult(x, cost, r, j, it, converged, message, rank, history)
