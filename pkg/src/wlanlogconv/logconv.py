"""Log-convexity witnesses for the WLAN rate region.

Given interior operating points T1, T2 and a mixing weight alpha, the point

    x*_i = y_i / delta,   y_i = (x1_i)^alpha (x2_i)^(1-alpha)

has log S(T*) = alpha log S(T1) + (1-alpha) log S(T2) exactly when delta
solves  F(delta) = X(T1)^alpha X(T2)^(1-alpha)  with

    F(delta) = delta * X(y / delta)
             = a delta + K sum(y) + sum_{k>=1} e_k(y) delta^(1-k).

F is strictly convex for n >= 2 and unbounded at both ends, so the equation
has a root on each side of the minimiser delta_star; the upper root is >= 1
whenever the target is at least F(1), which Hoelder's inequality guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import AttemptVector, WlanParams, log_x_denominator, x_denominator

ROOT_RTOL = 1e-12
RESIDUAL_TOL = 1e-9
NEAR_TANGENT = 1e-8


class BoundaryPointError(ValueError):
    """An endpoint has some tau_i in {0, 1}.

    Witnesses are only built for interior points; boundary throughputs are
    limits of interior ones because S is continuous in tau.
    """


class InfeasibleTargetError(ValueError):
    """Target lies below min F; no delta solves the equation."""


class RootFindingError(RuntimeError):
    pass


def safeguarded_newton(f: Callable[[float], float], df: Callable[[float], float],
                       lo: float, hi: float, *, ftol: float = 0.0,
                       xrtol: float = 1e-15, max_iter: int = 500) -> float:
    """Root of f in [lo, hi] by Newton steps kept inside a shrinking bracket.

    f(lo) and f(hi) must differ in sign.  A Newton step that leaves the
    bracket, or fails to halve it, is replaced by bisection.  Stops when
    |f| <= ftol or the bracket is narrower than xrtol * x.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise RootFindingError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    rising = fhi > 0
    x = 0.5 * (lo + hi)
    width = hi - lo
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= ftol:
            return x
        if (fx > 0) == rising:
            hi = x
        else:
            lo = x
        if hi - lo <= xrtol * abs(x):
            return x
        d = df(x)
        step_ok = False
        if d != 0.0 and math.isfinite(d):
            xn = x - fx / d
            if lo < xn < hi and abs(xn - x) < 0.5 * width:
                step_ok = True
        width = hi - lo
        x = xn if step_ok else 0.5 * (lo + hi)
    raise RootFindingError("safeguarded Newton did not converge")


def geometric_combination(x1, x2, alpha: float) -> np.ndarray:
    """Componentwise (x1)^alpha (x2)^(1-alpha), formed in the log domain."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError("x1 and x2 must have the same length")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if np.any(x1 <= 0) or np.any(x2 <= 0) or not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise BoundaryPointError(
            "boundary point: every x must be positive and finite (0 < tau < 1); "
            "boundary throughputs are limits of interior ones since S(T) is continuous")
    if alpha == 1.0:
        return x1.copy()
    if alpha == 0.0:
        return x2.copy()
    y = np.exp(alpha * np.log(x1) + (1.0 - alpha) * np.log(x2))
    # the geometric mean lies between its arguments; keep rounding from breaking that
    y = np.clip(y, np.minimum(x1, x2), np.maximum(x1, x2))
    return np.where(x1 == x2, x1, y)


def lhs_f(delta: float, y, p: WlanParams) -> float:
    """F(delta) = delta * X(y / delta); F(1) is exactly X(y)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    y = np.asarray(y, dtype=float)
    return delta * x_denominator(y / delta, p)


def _elementary_symmetric(z: np.ndarray) -> np.ndarray:
    e = np.zeros(z.size + 1)
    e[0] = 1.0
    for zi in z:
        e[1:] += zi * e[:-1]
    return e


def lhs_f_derivatives(delta: float, y, p: WlanParams) -> tuple[float, float]:
    """(F'(delta), F''(delta)).

    With z = y / delta and e_k the elementary symmetric polynomials,
    F' = a - sum_k (k-1) e_k(z) and F'' = sum_k k (k-1) e_k(z) / delta.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    e = _elementary_symmetric(np.asarray(y, dtype=float) / delta)
    k = np.arange(e.size)
    first = p.a - float(np.sum((k[2:] - 1) * e[2:]))
    second = float(np.sum(k[2:] * (k[2:] - 1) * e[2:])) / delta
    return first, second


@dataclass(frozen=True)
class DeltaRoots:
    lower: float
    star: float
    upper: float

    @property
    def near_tangent(self) -> bool:
        return self.upper - self.lower < NEAR_TANGENT * self.star

    def __iter__(self):
        return iter((self.lower, self.star, self.upper))


def _minimiser(y: np.ndarray, p: WlanParams) -> float:
    def d1(d):
        return lhs_f_derivatives(d, y, p)[0]

    def d2(d):
        return lhs_f_derivatives(d, y, p)[1]

    lo = hi = 1.0
    while d1(lo) >= 0:
        lo *= 0.5
    while d1(hi) <= 0:
        hi *= 2.0
    return safeguarded_newton(d1, d2, lo, hi, xrtol=ROOT_RTOL * 1e-3)


def solve_delta(y, target: float, p: WlanParams) -> DeltaRoots:
    """Both roots of F(delta) = target and the minimiser of F between them.

    n = 1 is affine (F = a delta + (K+1) y); its single root is reported as
    both lower and upper, with star = 0 (F decreases towards delta = 0 only
    in the limit).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise BoundaryPointError("y must be positive")
    if not target > 0:
        raise ValueError("target must be positive")

    if y.size == 1:
        root = (target - (p.big_k + 1.0) * y[0]) / p.a
        if root <= 0:
            raise InfeasibleTargetError(f"target {target} <= inf F = {(p.big_k + 1) * y[0]}")
        return DeltaRoots(root, 0.0, root)

    def g(d):
        return lhs_f(d, y, p) - target

    def dg(d):
        return lhs_f_derivatives(d, y, p)[0]

    star = _minimiser(y, p)
    f_star = lhs_f(star, y, p)
    ftol = ROOT_RTOL * target
    if f_star > target + ftol:
        raise InfeasibleTargetError(f"target {target!r} below min F = {f_star!r}")
    # delta = 1 is a root to within tolerance whenever F(1) ~ target
    # (identity mixing); pin it so the >= 1 guarantee is exact.
    one_is_root = abs(lhs_f(1.0, y, p) - target) <= ftol

    if f_star >= target - ftol:
        if one_is_root:
            return DeltaRoots(min(star, 1.0), star, max(star, 1.0))
        return DeltaRoots(star, star, star)

    if one_is_root and star <= 1.0:
        upper = 1.0
    else:
        hi = max(1.0, star)
        lo = star
        while g(hi) < 0:
            lo, hi = hi, 2.0 * hi
        upper = safeguarded_newton(g, dg, lo, hi, ftol=0.01 * ftol)

    if one_is_root and star >= 1.0:
        lower = 1.0
    else:
        lo = min(1.0, star)
        hi = star
        while g(lo) < 0:
            hi, lo = lo, 0.5 * lo
        lower = safeguarded_newton(g, dg, lo, hi, ftol=0.01 * ftol)

    for r in (lower, upper):
        if abs(g(r)) > ftol:
            raise RootFindingError(f"root {r!r} misses target by {g(r)!r}")
    return DeltaRoots(lower, star, upper)


def _log_throughput(x: np.ndarray, p: WlanParams) -> np.ndarray:
    return np.log(x) + np.log(p.payloads / p.t_c) - log_x_denominator(x, p)


@dataclass(frozen=True)
class CombinationWitness:
    t1: AttemptVector
    t2: AttemptVector
    alpha: float
    y: np.ndarray
    target: float
    delta_lower: float
    delta_star: float
    delta_upper: float
    delta: float
    x_star: np.ndarray
    residual: float
    near_tangent: bool = False

    @property
    def t_star(self) -> AttemptVector:
        return AttemptVector.from_x(self.x_star)

    def in_box(self, tau_bar) -> bool:
        return self.t_star.within(tau_bar)


def midpoint_witness(t1: AttemptVector, t2: AttemptVector, alpha: float, p: WlanParams,
                     branch: str = "upper") -> CombinationWitness:
    """Attempt vector whose log-throughput is the alpha-mix of those at t1 and t2."""
    if branch not in ("upper", "lower"):
        raise ValueError("branch must be 'upper' or 'lower'")
    if t1.n != p.n or t2.n != p.n:
        raise ValueError("attempt vectors do not match the parameter set")
    y = geometric_combination(t1.x, t2.x, alpha)
    target = x_denominator(t1.x, p) ** alpha * x_denominator(t2.x, p) ** (1.0 - alpha)
    roots = solve_delta(y, target, p)

    identity = alpha in (0.0, 1.0) or np.array_equal(t1.x, t2.x)
    if identity and 1.0 in (roots.lower, roots.upper):
        # y is an endpoint and delta = 1 reproduces it exactly
        delta = 1.0
    else:
        delta = roots.upper if branch == "upper" else roots.lower
    x_star = y / delta if delta != 1.0 else y.copy()

    if np.array_equal(t1.x, t2.x):
        mixed = _log_throughput(t1.x, p)
    else:
        mixed = alpha * _log_throughput(t1.x, p) + (1.0 - alpha) * _log_throughput(t2.x, p)
    residual = float(np.max(np.abs(mixed - _log_throughput(x_star, p))))
    return CombinationWitness(t1, t2, float(alpha), y, float(target), roots.lower, roots.star,
                              roots.upper, delta, x_star, residual, roots.near_tangent)


@dataclass
class SegmentReport:
    rows: list = field(default_factory=list)
    in_box: list = field(default_factory=list)
    tol: float = RESIDUAL_TOL

    @property
    def max_residual(self) -> float:
        return max((w.residual for w in self.rows), default=0.0)

    @property
    def all_in_box(self) -> bool:
        return all(self.in_box)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def csv_rows(self):
        for w, ok in zip(self.rows, self.in_box):
            yield (w.alpha, w.delta_lower, w.delta_star, w.delta_upper, w.residual, int(ok))


CSV_HEADER = ("alpha", "delta_lower", "delta_star", "delta_upper", "residual", "in_box")


def verify_segment(t1: AttemptVector, t2: AttemptVector, p: WlanParams, num_alphas: int = 11,
                   tol: float = RESIDUAL_TOL, branch: str = "upper") -> SegmentReport:
    """Witnesses for evenly spaced alpha in [0, 1] along one pair of points."""
    if num_alphas < 1:
        raise ValueError("num_alphas must be >= 1")
    alphas = np.linspace(0.0, 1.0, num_alphas) if num_alphas > 1 else np.array([0.5])
    report = SegmentReport(tol=tol)
    for alpha in alphas:
        w = midpoint_witness(t1, t2, float(alpha), p, branch=branch)
        report.rows.append(w)
        report.in_box.append(w.in_box(p.tau_bar))
    return report
