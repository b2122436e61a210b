"""Small root finders shared across modules."""

from __future__ import annotations

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""


def solve_increasing(func, dfunc, target, lo, hi, tol=1e-15, max_iter=200):
    """Vectorized safeguarded Newton for strictly increasing ``func``.

    Solves ``func(x) = target`` elementwise given brackets ``lo <= x <= hi``.
    Newton steps that leave the bracket are replaced by bisection.
    """
    target = np.asarray(target, dtype=float)
    lo = np.array(np.broadcast_to(lo, target.shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, target.shape), dtype=float)
    x = 0.5 * (lo + hi)
    scale = np.maximum(1.0, np.abs(target))
    for _ in range(max_iter):
        r = func(x) - target
        if np.all(np.abs(r) <= tol * scale):
            return x
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        step = x - r / dfunc(x)
        inside = (step > lo) & (step < hi)
        x_new = np.where(inside, step, 0.5 * (lo + hi))
        if np.all(x_new == x):
            return x
        x = x_new
    r = func(x) - target
    if np.all(np.abs(r) <= 1e-13 * scale):
        return x
    raise ConvergenceError(f"monotone solve stalled, residual {np.max(np.abs(r)):.3e}")


def bisect_increasing(func, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    """Root of a continuous increasing scalar function with func(lo) <= 0 < func(hi).

    Returns ``(x, func(x), iterations)``.  Stops when |func(x)| < tol; raises
    ConvergenceError if the bracket collapses to adjacent floats first.
    """
    f_lo = func(lo)
    if f_lo == 0.0:
        return lo, 0.0, 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            f_mid = func(mid)
            if abs(f_mid) < tol:
                return mid, f_mid, it
            raise ConvergenceError(f"bisection stagnated at {mid!r} with residual {f_mid:.3e}")
        f_mid = func(mid)
        if abs(f_mid) < tol:
            return mid, f_mid, it
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("bisection did not converge")
