"""Analytic per-station throughput of a slotted 802.11e WLAN.

Each station i attempts a transmission in a MAC slot with probability tau_i.
A MAC slot is a PHY idle slot (sigma), a successful transmission (t_s) or a
collision (t_c).  Most of the algebra is done in the transformed coordinate
x_i = tau_i / (1 - tau_i), where the mean slot duration becomes the
polynomial

    X(x) = a + K * sum(x) + prod(1 + x) - 1,   a = sigma/t_c, K = t_s/t_c - 1

and s_i = (x_i * L_i / t_c) / X(x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Finite stand-in for x = inf (tau = 1).  For one saturated station the
# relative error on s is a / (a + (K+1) x) <= 1/x = 1e-9.
X_SURROGATE = 1e9

# Above these sizes prod(1 + x) is formed from log1p terms.
_LOG_PRODUCT_N = 16
_LOG_PRODUCT_X = 1e6


class SaturatedCapError(ValueError):
    """tau = 1 has no finite x; use X_SURROGATE (or x_bar = inf) instead."""


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WlanParams:
    n: int
    sigma: float
    t_s: float
    t_c: float
    payloads: np.ndarray
    tau_bar: np.ndarray

    def __init__(self, n, sigma, t_s, t_c, payloads, tau_bar=None):
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        payloads = _as_vector(payloads, "payloads")
        if payloads.size == 1 and n > 1:
            payloads = _as_vector(np.full(n, payloads[0]), "payloads")
        if tau_bar is None:
            tau_bar = np.ones(n)
        tau_bar = _as_vector(tau_bar, "tau_bar")
        if tau_bar.size == 1 and n > 1:
            tau_bar = _as_vector(np.full(n, tau_bar[0]), "tau_bar")
        if payloads.size != n or tau_bar.size != n:
            raise ValueError(f"payloads and tau_bar must have length n={n}")
        if not 0 < sigma <= t_c <= t_s:
            raise ValueError("require 0 < sigma <= t_c <= t_s")
        if np.any(payloads <= 0) or not np.all(np.isfinite(payloads)):
            raise ValueError("payloads must be positive and finite")
        if np.any((tau_bar < 0) | (tau_bar > 1)) or np.any(np.isnan(tau_bar)):
            raise ValueError("tau_bar entries must lie in [0, 1]")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "sigma", float(sigma))
        object.__setattr__(self, "t_s", float(t_s))
        object.__setattr__(self, "t_c", float(t_c))
        object.__setattr__(self, "payloads", payloads)
        object.__setattr__(self, "tau_bar", tau_bar)

    @property
    def a(self) -> float:
        return self.sigma / self.t_c

    @property
    def big_k(self) -> float:
        return self.t_s / self.t_c - 1.0

    @property
    def x_bar(self) -> np.ndarray:
        """Caps in x coordinates; tau_bar = 1 maps to +inf."""
        with np.errstate(divide="ignore"):
            xb = np.where(self.tau_bar >= 1.0, np.inf, self.tau_bar / (1.0 - self.tau_bar))
        return xb

    @property
    def x_bar_finite(self) -> np.ndarray:
        return np.minimum(self.x_bar, X_SURROGATE)

    @property
    def phy_rate(self) -> np.ndarray:
        """L_i / t_s, the single-station saturation throughput."""
        return self.payloads / self.t_s

    def with_caps(self, tau_bar) -> "WlanParams":
        return WlanParams(self.n, self.sigma, self.t_s, self.t_c, self.payloads, tau_bar)

    def scaled(self, c: float) -> "WlanParams":
        """All durations multiplied by c (a and K unchanged)."""
        return WlanParams(self.n, c * self.sigma, c * self.t_s, c * self.t_c,
                          self.payloads, self.tau_bar)

    def __eq__(self, other):
        if not isinstance(other, WlanParams):
            return NotImplemented
        return (self.n == other.n and self.sigma == other.sigma and self.t_s == other.t_s
                and self.t_c == other.t_c
                and np.array_equal(self.payloads, other.payloads)
                and np.array_equal(self.tau_bar, other.tau_bar))

    __hash__ = None


def tau_to_x(tau):
    """tau / (1 - tau).  Raises SaturatedCapError at tau = 1."""
    t = np.asarray(tau, dtype=float)
    if np.any((t < 0) | (t > 1)) or np.any(np.isnan(t)):
        raise ValueError("tau must lie in [0, 1)")
    if np.any(t == 1.0):
        raise SaturatedCapError(
            "tau = 1 is a saturated cap with no finite x; "
            f"use the large-x surrogate x = {X_SURROGATE:g}")
    x = t / (1.0 - t)
    return float(x) if np.ndim(tau) == 0 else x


def x_to_tau(x):
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0) or np.any(np.isnan(xs)):
        raise ValueError("x must be nonnegative")
    t = np.where(np.isinf(xs), 1.0, xs / (1.0 + np.where(np.isinf(xs), 0.0, xs)))
    return float(t) if np.ndim(x) == 0 else t


def tau_from_mac(q: float, cw_min: int) -> float:
    """Attempt probability 2q/CW_min with CW_max = CW_min.

    Post-backoff is ignored.  q is the probability that a packet is waiting
    when the station wins a transmission opportunity (q = 1 when saturated).
    """
    if cw_min < 2:
        raise ValueError("cw_min must be >= 2")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    return min(2.0 * q / cw_min, 1.0)


@dataclass(frozen=True)
class AttemptVector:
    """Per-station attempt probabilities together with x = tau/(1-tau).

    Build with from_tau or from_x.  When built from x, x is kept exactly and
    tau is derived, so points near tau = 1 keep full precision in x.
    """

    tau: np.ndarray
    x: np.ndarray

    @classmethod
    def from_tau(cls, tau: Sequence[float]) -> "AttemptVector":
        t = _as_vector(tau, "tau")
        return cls(t, _as_vector(tau_to_x(t), "x"))

    @classmethod
    def from_x(cls, x: Sequence[float]) -> "AttemptVector":
        xs = _as_vector(x, "x")
        if np.any(np.isinf(xs)):
            raise SaturatedCapError(
                f"x = inf is not representable; use X_SURROGATE = {X_SURROGATE:g}")
        return cls(_as_vector(x_to_tau(xs), "tau"), xs)

    @property
    def n(self) -> int:
        return self.tau.size

    def within(self, tau_bar) -> bool:
        """True when tau_i <= tau_bar_i for every station (checked on x)."""
        tb = np.asarray(tau_bar, dtype=float)
        with np.errstate(divide="ignore"):
            xb = np.where(tb >= 1.0, np.inf, tb / (1.0 - tb))
        return bool(np.all(self.x <= xb))

    def __eq__(self, other):
        if not isinstance(other, AttemptVector):
            return NotImplemented
        return np.array_equal(self.tau, other.tau) and np.array_equal(self.x, other.x)

    __hash__ = None


@dataclass(frozen=True)
class SlotStats:
    p_idle: float
    p_succ: float
    p_coll: float
    mean_slot: float


@dataclass(frozen=True)
class ThroughputVector:
    s: np.ndarray
    log_s: np.ndarray

    @classmethod
    def from_s(cls, s) -> "ThroughputVector":
        s = _as_vector(s, "s")
        with np.errstate(divide="ignore"):
            log_s = np.log(s)
        log_s.setflags(write=False)
        return cls(s, log_s)


def _check_conformant(n: int, p: WlanParams) -> None:
    if n != p.n:
        raise ValueError(f"attempt vector has {n} stations, parameters have {p.n}")


def slot_stats(T: AttemptVector, p: WlanParams) -> SlotStats:
    _check_conformant(T.n, p)
    one_minus = 1.0 - T.tau
    p_idle = float(np.prod(one_minus))
    # tau_i * prod_{k != i}(1 - tau_k), without dividing by (1 - tau_i)
    p_succ = float(sum(T.tau[i] * np.prod(np.delete(one_minus, i)) for i in range(T.n)))
    p_coll = max(0.0, 1.0 - p_idle - p_succ)
    mean_slot = p.sigma * p_idle + p.t_s * p_succ + p.t_c * p_coll
    return SlotStats(p_idle, p_succ, p_coll, mean_slot)


def log_prod1p(x: np.ndarray) -> np.ndarray:
    """log prod(1 + x) over the last axis."""
    return np.sum(np.log1p(x), axis=-1)


def _prod1p_minus_one(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] > _LOG_PRODUCT_N or np.any(x > _LOG_PRODUCT_X):
        return np.expm1(log_prod1p(x))
    return np.prod(1.0 + x, axis=-1) - 1.0


def x_denominator(x, p: WlanParams):
    """X = a + K*sum(x) + prod(1+x) - 1 over the last axis of x."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise ValueError("x must be nonnegative")
    val = p.a + p.big_k * np.sum(xs, axis=-1) + _prod1p_minus_one(xs)
    return float(val) if val.ndim == 0 else val


def log_x_denominator(x, p: WlanParams):
    """log X without overflow for very large products."""
    xs = np.asarray(x, dtype=float)
    lp = log_prod1p(xs)
    rest = p.a + p.big_k * np.sum(xs, axis=-1) - 1.0
    big = lp > 600.0
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.log(p.a + p.big_k * np.sum(xs, axis=-1) + np.expm1(np.minimum(lp, 600.0)))
        shifted = lp + np.log1p(rest * np.exp(-lp))
    val = np.where(big, shifted, direct)
    return float(val) if val.ndim == 0 else val


def throughput_x(x, p: WlanParams) -> np.ndarray:
    """Vectorised x-form throughput; x has stations on the last axis."""
    xs = np.asarray(x, dtype=float)
    X = np.asarray(x_denominator(xs, p))
    return xs * (p.payloads / p.t_c) / X[..., None]


def throughput(T: AttemptVector, p: WlanParams) -> ThroughputVector:
    _check_conformant(T.n, p)
    return ThroughputVector.from_s(throughput_x(T.x, p))


def throughput_tau_form(T: AttemptVector, p: WlanParams) -> np.ndarray:
    """Throughput evaluated directly from tau (success probability over mean slot)."""
    _check_conformant(T.n, p)
    one_minus = 1.0 - T.tau
    per_station = np.array([T.tau[i] * np.prod(np.delete(one_minus, i)) for i in range(T.n)])
    return per_station * p.payloads / slot_stats(T, p).mean_slot


def normalize(s, p: WlanParams) -> np.ndarray:
    """Throughput divided by the PHY rate L_i / t_s."""
    return np.asarray(s, dtype=float) / p.phy_rate


def saturated_throughput(p: WlanParams) -> np.ndarray:
    """Limit of s_i as x_i -> inf with all other stations silent."""
    return p.payloads / p.t_s
