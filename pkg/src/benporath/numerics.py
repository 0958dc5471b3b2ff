"""Scalar root finding, brute-force grid maximisation and quadrature.

Root finding and quadrature delegate to scipy (Brent's method and adaptive
QUADPACK panels); this module pins down the error contract and defaults the
structural solver relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo

from .exceptions import AllInfeasible, MaxIterations, NonFiniteIntegrand, NoSignChange

ROOT_TOL = 1e-10
QUAD_TOL = 1e-8
MAX_ITER = 200
SCAN_INTERVALS = 512


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise NoSignChange(f"empty bracket [{self.lo}, {self.hi}]")
        if np.sign(self.f_lo) * np.sign(self.f_hi) > 0 or math.isnan(self.f_lo) or math.isnan(self.f_hi):
            raise NoSignChange(
                f"no sign change on [{self.lo}, {self.hi}]: g(lo)={self.f_lo}, g(hi)={self.f_hi}"
            )

    @classmethod
    def of(cls, g: Callable[[float], float], lo: float, hi: float) -> "Bracket":
        return cls(lo, hi, g(lo), g(hi))


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    n_points: tuple

    def __post_init__(self):
        lo, hi, n = (tuple(np.atleast_1d(v).tolist()) for v in (self.lo, self.hi, self.n_points))
        if not len(lo) == len(hi) == len(n):
            raise ValueError("lo, hi and n_points must have one entry per dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("GridSpec requires lo < hi in every dimension")
        if any(int(k) < 2 for k in n):
            raise ValueError("GridSpec requires at least 2 points per dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_points", tuple(int(k) for k in n))

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.n_points)]

    @property
    def steps(self) -> tuple:
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.n_points))


def find_root(g: Callable[[float], float], bracket: Bracket, tol: float = ROOT_TOL,
              max_iter: int = MAX_ITER) -> float:
    """Root of ``g`` inside a sign-changing bracket (Brent's method)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if bracket.f_lo == 0:
        return bracket.lo
    if bracket.f_hi == 0:
        return bracket.hi
    x, info = _spo.brentq(g, bracket.lo, bracket.hi, xtol=tol, maxiter=max_iter,
                          full_output=True, disp=False)
    if not info.converged:
        raise MaxIterations(f"root not converged after {info.iterations} iterations ({info.flag})")
    return float(x)


def find_bracket(g: Callable[[float], float], lo: float, hi: float,
                 n: int = SCAN_INTERVALS, vectorized: bool = False) -> Bracket:
    """Leftmost sign-changing subinterval among ``n`` equal pieces of [lo, hi].

    The scan stops at the first sign change (or exact zero), so the bracket
    contains the smallest root visible at this resolution. Infinite values
    are fine at scan nodes; NaN nodes are skipped. With ``vectorized=True``
    ``g`` is called once on the array of nodes.
    """
    xs = np.linspace(lo, hi, n + 1)
    if vectorized:
        fs = np.asarray(g(xs), dtype=float)
    else:
        fs = np.array([float(g(float(x))) for x in xs])
    keep = np.flatnonzero(~np.isnan(fs))
    if keep.size == 0:
        raise NoSignChange(f"g is NaN at every node of [{lo}, {hi}]")
    kx, kf = xs[keep], fs[keep]
    sign = np.sign(kf)
    zero = np.flatnonzero(sign == 0)
    change = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    first_zero = zero[0] if zero.size else None
    first_change = change[0] if change.size else None
    if first_zero is not None and (first_change is None or first_zero <= first_change):
        j = first_zero
        if j > 0:
            return Bracket(float(kx[j - 1]), float(kx[j]), float(kf[j - 1]), 0.0)
        nxt = float(kx[1]) if kx.size > 1 else float(kx[0]) + 1.0
        return Bracket(float(kx[0]), nxt, 0.0, 0.0)
    if first_change is not None:
        j = first_change
        return Bracket(float(kx[j]), float(kx[j + 1]), float(kf[j]), float(kf[j + 1]))
    raise NoSignChange(f"no sign change found on [{lo}, {hi}] with {n} subintervals")


def grid_argmax(h: Callable, grid: GridSpec, vectorized: bool = False) -> tuple[np.ndarray, float]:
    """Brute-force maximiser of ``h`` over every node of ``grid``.

    With ``vectorized=True`` ``h`` receives one broadcastable array per
    dimension (``np.meshgrid`` with ``indexing='ij'``) and must return the
    values on the whole grid. NaN counts as infeasible. Ties resolve to the
    lexicographically smallest node.
    """
    axes = grid.axes
    if vectorized:
        mesh = np.meshgrid(*axes, indexing="ij")
        values = np.asarray(h(*mesh), dtype=float)
        values = np.broadcast_to(values, mesh[0].shape)
    else:
        values = np.empty(tuple(grid.n_points))
        for idx in np.ndindex(*grid.n_points):
            point = np.array([ax[i] for ax, i in zip(axes, idx)])
            values[idx] = h(point)
    values = np.where(np.isnan(values), -np.inf, values)
    flat = values.ravel()
    k = int(np.argmax(flat))
    if flat[k] == -np.inf:
        raise AllInfeasible("objective is -inf at every grid node")
    idx = np.unravel_index(k, values.shape)
    return np.array([ax[i] for ax, i in zip(axes, idx)]), float(flat[k])


def integrate(g: Callable[[float], float], a: float, b: float, tol: float = QUAD_TOL,
              limit: int = 200) -> float:
    """Adaptive quadrature of ``g`` over [a, b]."""
    if a > b:
        raise ValueError("integrate requires a <= b")
    if a == b:
        return 0.0

    def checked(t):
        v = g(t)
        if not math.isfinite(v):
            raise NonFiniteIntegrand(f"integrand is {v} at t={t}")
        return v

    # QUADPACK error estimates are conservative but not guaranteed; keep a margin.
    value, _err = _spi.quad(checked, a, b, epsabs=tol / 10, epsrel=0.0, limit=limit)
    return float(value)


def scan_sign_changes(values: Sequence[float]) -> int:
    """Number of strict sign changes in a sequence, ignoring exact zeros and NaN."""
    s = np.sign(np.asarray(values, dtype=float))
    s = s[(s != 0) & ~np.isnan(s)]
    return int(np.count_nonzero(s[1:] != s[:-1]))
