"""Utility-fair throughput allocation in log coordinates.

With u_i = log x_i the log-throughput is

    log s_i(u) = u_i + log(L_i / t_c) - log X(exp(u))

and log X(exp(u)) is convex (X is a positive-coefficient polynomial in x plus
a constant), so every log s_i is concave in u.  The alpha-fair objective
sum_i w_i f(s_i) with f(s) = s^(1-alpha)/(1-alpha) (log s at alpha = 1) is
then concave in u for alpha >= 1 and the box tau <= tau_bar becomes a box in
u.  We maximise it by projected gradient ascent with Armijo backtracking.

The ascent runs on a rescaled but equivalent objective so that step sizes
and the stopping test are unit-free:

    alpha = 1:  psi(u) = sum_i w_i log s_i / sum_i w_i
    alpha > 1:  psi(u) = -log(sum_i w_i s_i^(1-alpha) / sum_i w_i) / (alpha - 1)

Both are concave with the same maximiser, and grad psi_j = pi_j - x_j dX/dx_j / X
where pi is w / sum(w) (alpha = 1) or the softmax of log w_i + (1-alpha) log s_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    AttemptVector,
    ThroughputVector,
    WlanParams,
    log_prod1p,
    log_x_denominator,
    throughput_x,
)

U_FLOOR = -30.0
KKT_TOL = 1e-8
MAX_ITER = 100_000
STEP_INIT = 1.0
BACKTRACK = 0.5
ARMIJO = 1e-4
OFF_AFTER = 100
MAXMIN_ALPHA = 16.0


class ConvergenceError(RuntimeError):
    def __init__(self, message, u_best, residual):
        super().__init__(message)
        self.u_best = u_best
        self.residual = residual


def utility(z, w: float, fair_alpha: float):
    """alpha-fair utility of a throughput given as its log z = log s."""
    if fair_alpha < 1:
        raise ValueError("fair_alpha must be >= 1")
    if fair_alpha == 1:
        return w * np.asarray(z, dtype=float) if np.ndim(z) else w * float(z)
    val = w * np.exp((1.0 - fair_alpha) * np.asarray(z, dtype=float)) / (1.0 - fair_alpha)
    return val if np.ndim(z) else float(val)


@dataclass(frozen=True)
class FairnessProblem:
    params: WlanParams
    weights: np.ndarray = None
    fair_alpha: float = 1.0
    u_floor: float = U_FLOOR

    def __post_init__(self):
        w = np.ones(self.params.n) if self.weights is None else np.array(self.weights, dtype=float)
        if w.shape != (self.params.n,):
            raise ValueError(f"need {self.params.n} weights, got {w.size}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive")
        if not self.fair_alpha >= 1:
            raise ValueError("fair_alpha must be >= 1")
        if np.any(self.u_cap < self.u_floor):
            raise ValueError("a cap lies below u_floor; drop stations with tau_bar ~ 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "fair_alpha", float(self.fair_alpha))

    @property
    def u_cap(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.params.x_bar_finite)


@dataclass(frozen=True)
class GridCheck:
    grid_value: float
    tolerance: float
    solver_value: float

    @property
    def passed(self) -> bool:
        return abs(self.solver_value - self.grid_value) <= self.tolerance


@dataclass(frozen=True)
class FairAllocation:
    tau_opt: AttemptVector
    s_opt: ThroughputVector
    objective: float
    kkt_residual: float
    iterations: int
    off: tuple = ()
    grid_check: GridCheck | None = None

    @property
    def u(self) -> np.ndarray:
        return np.log(self.tau_opt.x)


def _parts(u: np.ndarray, p: WlanParams):
    """x, log s and x_j * dX/dx_j / X for every station."""
    x = np.exp(u)
    log_x_den = log_x_denominator(x, p)
    log_s = u + np.log(p.payloads / p.t_c) - log_x_den
    # dX/dx_j = K + prod_{k != j}(1 + x_k)
    share = (p.big_k * np.exp(u - log_x_den)
             + np.exp(log_prod1p(x) - log_x_den + u - np.log1p(x)))
    return x, log_s, share


def _check_box(u: np.ndarray, prob: FairnessProblem) -> None:
    if u.shape != (prob.params.n,):
        raise ValueError("u has the wrong length")
    if np.any(u > prob.u_cap) or np.any(u < prob.u_floor):
        raise ValueError("u lies outside [u_floor, log x_bar]")


def objective_and_gradient(u, prob: FairnessProblem) -> tuple[float, np.ndarray]:
    """sum_i w_i f(s_i(u)) and its gradient with respect to u."""
    u = np.asarray(u, dtype=float)
    _check_box(u, prob)
    _, log_s, share = _parts(u, prob.params)
    w, al = prob.weights, prob.fair_alpha
    value = float(np.sum(utility(log_s, 1.0, al) * w))
    c = w * np.exp((1.0 - al) * log_s)
    return value, c - np.sum(c) * share


def _scaled(u: np.ndarray, prob: FairnessProblem):
    _, log_s, share = _parts(u, prob.params)
    w, al = prob.weights, prob.fair_alpha
    if al == 1.0:
        pi = w / w.sum()
        psi = float(pi @ log_s)
    else:
        v = np.log(w / w.sum()) + (1.0 - al) * log_s
        vmax = v.max()
        lse = vmax + np.log(np.sum(np.exp(v - vmax)))
        pi = np.exp(v - lse)
        psi = float(-lse / (al - 1.0))
    return psi, pi - share


def _projected(g: np.ndarray, u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    out = g.copy()
    out[(u >= hi) & (g > 0)] = 0.0
    out[(u <= lo) & (g < 0)] = 0.0
    return out


def _ascend(prob: FairnessProblem, u0: np.ndarray, free: np.ndarray, tol: float, max_iter: int):
    lo = np.where(free, prob.u_floor, u0)
    hi = np.where(free, prob.u_cap, u0)
    u = np.clip(u0, lo, hi)
    psi, g = _scaled(u, prob)
    pinned = np.zeros(u.size, dtype=int)
    best_u, best_res = u.copy(), np.inf
    for it in range(max_iter + 1):
        pg = _projected(g, u, lo, hi)
        res = float(np.max(np.abs(pg)))
        if res < best_res:
            best_u, best_res = u.copy(), res
        if res <= tol:
            return u, res, it, pinned
        if it == max_iter:
            break
        step = STEP_INIT
        while True:
            u_new = np.clip(u + step * g, lo, hi)
            psi_new, g_new = _scaled(u_new, prob)
            d = u_new - u
            want = ARMIJO * float(g @ d)
            # by concavity psi_new - psi >= g_new . d; that bound stays
            # meaningful once the value difference drowns in rounding
            if psi_new >= psi + want or float(g_new @ d) >= want:
                break
            step *= BACKTRACK
            if step < 1e-20:
                raise ConvergenceError("line search failed", best_u, best_res)
        u, psi, g = u_new, psi_new, g_new
        pinned = np.where(u <= prob.u_floor, pinned + 1, 0)
    raise ConvergenceError(f"no convergence after {max_iter} iterations "
                           f"(projected gradient {best_res:.3g})", best_u, best_res)


def _x_of(u: np.ndarray, prob: FairnessProblem) -> np.ndarray:
    # exp(log x_bar) can land an ulp above x_bar; snap capped stations back
    return np.where(u >= prob.u_cap, prob.params.x_bar_finite, np.exp(u))


def _allocation(prob: FairnessProblem, u, res, iters, pinned, grid_check=None) -> FairAllocation:
    x = _x_of(u, prob)
    s = throughput_x(x, prob.params)
    value = float(np.sum(utility(np.log(s), 1.0, prob.fair_alpha) * prob.weights))
    off = tuple(int(i) for i in np.flatnonzero(pinned >= OFF_AFTER))
    return FairAllocation(AttemptVector.from_x(x), ThroughputVector.from_s(s), value, res, iters,
                          off, grid_check)


def default_start(prob: FairnessProblem) -> np.ndarray:
    return np.clip(np.full(prob.params.n, -1.0), prob.u_floor, prob.u_cap)


def solve_fair(prob: FairnessProblem, u0=None, tol: float = KKT_TOL,
               max_iter: int = MAX_ITER) -> FairAllocation:
    """Maximise the alpha-fair utility over tau in [0, tau_bar].

    kkt_residual is the largest component of the projected gradient of the
    rescaled objective (see module docstring), so it is unit-free.
    """
    u0 = default_start(prob) if u0 is None else np.asarray(u0, dtype=float)
    free = np.ones(prob.params.n, dtype=bool)
    u, res, iters, pinned = _ascend(prob, u0, free, tol, max_iter)
    return _allocation(prob, u, res, iters, pinned)


def maxmin_grid_oracle(p: WlanParams, points: int = 201) -> GridCheck:
    """Brute-force max over a tau grid of min_i s_i (n <= 3).

    The tolerance is the largest change of min_i s_i between the grid
    maximiser and its immediate grid neighbours.
    """
    from .rateregion import GridSpec, sample_region

    if p.n > 3:
        raise ValueError("grid oracle is limited to n <= 3")
    sample = sample_region(p, GridSpec(points=points, spacing="uniform-tau"))
    m = sample.s.min(axis=1)
    k = int(np.argmax(m))
    centre = np.array(np.unravel_index(k, sample.shape))
    tol = 0.0
    for offset in np.ndindex(*(3,) * p.n):
        nb = centre + np.array(offset) - 1
        if np.any(nb < 0) or np.any(nb >= np.array(sample.shape)):
            continue
        tol = max(tol, abs(m[np.ravel_multi_index(tuple(nb), sample.shape)] - m[k]))
    return GridCheck(float(m[k]), float(tol), float("nan"))


def maxmin_fair(p: WlanParams, tau_bar=None, tol: float = KKT_TOL, verify: bool = True,
                grid_points: int = 201) -> FairAllocation:
    """Max-min fair surrogate: alpha = 16 with unit weights, then one tightening round.

    Stations that finish at their cap are fixed there and the remaining
    stations are re-optimised.  For n <= 3 the result is checked against a
    brute-force grid maximum of min_i s_i.
    """
    if tau_bar is not None:
        p = p.with_caps(tau_bar)
    prob = FairnessProblem(p, np.ones(p.n), MAXMIN_ALPHA)
    free = np.ones(p.n, dtype=bool)
    u, res, iters, pinned = _ascend(prob, default_start(prob), free, tol, MAX_ITER)
    binding = u >= prob.u_cap
    if np.any(binding) and not np.all(binding):
        u = np.where(binding, prob.u_cap, u)
        u, res, more, pinned = _ascend(prob, u, ~binding, tol, MAX_ITER)
        iters += more
    check = None
    if verify and p.n <= 3:
        oracle = maxmin_grid_oracle(p, grid_points)
        s_min = float(throughput_x(_x_of(u, prob), p).min())
        check = GridCheck(oracle.grid_value, oracle.tolerance, s_min)
    return _allocation(prob, u, res, iters, pinned, check)
