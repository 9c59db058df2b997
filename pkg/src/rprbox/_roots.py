"""Vectorised bracketing helpers shared by the slice and DKP solvers.

``func`` maps an array of abscissae (one per bracket) to function values;
every bracket is advanced in lockstep so a whole grid refines in one pass.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

ArrayFunc = Callable[[np.ndarray], np.ndarray]
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sign_change_cells(values: np.ndarray) -> tuple[np.ndarray, ...]:
    """Indices of cells ``[k, k+1]`` along the last axis with a strict sign change.

    NaN samples never form a bracket.
    """
    s = np.sign(values)
    return np.nonzero(s[..., :-1] * s[..., 1:] < 0)


def bisect(
    func: ArrayFunc,
    lo: np.ndarray,
    hi: np.ndarray,
    flo: np.ndarray,
    xtol: float,
    ftol: float = 0.0,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Bisect all brackets until width <= xtol or |f(mid)| < ftol.

    Returns the best abscissa seen per bracket and its function value.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = np.array(flo, dtype=float)
    best_x = 0.5 * (lo + hi)
    best_f = np.full(lo.shape, np.inf)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = func(mid)
        better = active & (np.abs(fm) < np.abs(best_f))
        best_x = np.where(better, mid, best_x)
        best_f = np.where(better, fm, best_f)
        same = np.signbit(fm) == np.signbit(flo)
        lo = np.where(active & same, mid, lo)
        flo = np.where(active & same, fm, flo)
        hi = np.where(active & ~same, mid, hi)
        active &= (hi - lo > xtol) & ~(np.abs(fm) < ftol)
        if not active.any():
            break
    return best_x, best_f


def golden_min(
    func: ArrayFunc,
    sign: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    max_iter: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Golden-section minimisation of ``sign * func`` on each [lo, hi].

    Returns ``(argmin, func(argmin))`` with the unsigned function value.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc = sign * func(c)
    fd = sign * func(d)
    for _ in range(max_iter):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        # only one fresh evaluation per bracket is needed, but evaluating
        # both keeps the arrays aligned and costs little here
        new_c = hi - _GOLDEN * (hi - lo)
        new_d = lo + _GOLDEN * (hi - lo)
        f_new_c = sign * func(new_c)
        f_new_d = sign * func(new_d)
        c, d, fc, fd = (
            np.where(left, new_c, d),
            np.where(left, c, new_d),
            np.where(left, f_new_c, fd),
            np.where(left, fc, f_new_d),
        )
    x = 0.5 * (lo + hi)
    return x, func(x)
