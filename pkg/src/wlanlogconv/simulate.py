"""Slot-level Monte Carlo check of the analytic throughput.

Each MAC slot every station attempts independently with probability tau_i.
No attempt is an idle slot (sigma), exactly one a success for that station
(t_s, L_i bits delivered), two or more a collision (t_c).  Throughput is
delivered bits over elapsed model time; error bars come from batch means.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import AttemptVector, WlanParams, slot_stats, throughput
from .csvfmt import to_csv

CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    slots: int = 1_000_000
    seed: int = 0
    batches: int = 20

    def __post_init__(self):
        if self.batches < 2 or self.slots < self.batches:
            raise ValueError("need slots >= batches >= 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    s_hat: np.ndarray
    stderr: np.ndarray
    idle: int
    success: np.ndarray
    collision: int
    elapsed_model_time: float
    batch_s: np.ndarray

    @property
    def slots(self) -> int:
        return int(self.idle + self.success.sum() + self.collision)


def station_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One PCG64 stream per station, spawned from the master seed.

    Station i always gets the i-th child, so adding stations leaves the
    draws of existing ones untouched.
    """
    return [np.random.Generator(np.random.PCG64(ss)) for ss in np.random.SeedSequence(seed).spawn(n)]


def _batch_sizes(slots: int, batches: int) -> list[int]:
    base, extra = divmod(slots, batches)
    return [base + (1 if b < extra else 0) for b in range(batches)]


def run_slots(p: WlanParams, T: AttemptVector, cfg: SimConfig, threads: int = 1) -> SimResult:
    if T.n != p.n:
        raise ValueError(f"attempt vector has {T.n} stations, parameters have {p.n}")
    if np.any(T.tau >= 1.0):
        raise ValueError("tau = 1 cannot be simulated; its throughput is the analytic "
                         "single-station limit L/t_s (see model.saturated_throughput)")
    n = p.n
    gens = station_streams(cfg.seed, n)
    tau = T.tau
    idle = np.zeros(cfg.batches, dtype=np.int64)
    coll = np.zeros(cfg.batches, dtype=np.int64)
    succ = np.zeros((cfg.batches, n), dtype=np.int64)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def draw(i, size):
        return gens[i].random(size) < tau[i]

    try:
        for b, size in enumerate(_batch_sizes(cfg.slots, cfg.batches)):
            done = 0
            while done < size:
                m = min(CHUNK, size - done)
                if pool is None:
                    cols = [draw(i, m) for i in range(n)]
                else:
                    cols = list(pool.map(draw, range(n), [m] * n))
                att = np.stack(cols, axis=1)
                k = att.sum(axis=1)
                idle[b] += int(np.count_nonzero(k == 0))
                coll[b] += int(np.count_nonzero(k >= 2))
                succ[b] += att[k == 1].sum(axis=0)
                done += m
    finally:
        if pool is not None:
            pool.shutdown()

    nsucc = succ.sum(axis=1)
    time_b = p.sigma * idle + p.t_s * nsucc + p.t_c * coll
    batch_s = succ * p.payloads / time_b[:, None]
    elapsed = float(time_b.sum())
    s_hat = succ.sum(axis=0) * p.payloads / elapsed
    stderr = batch_s.std(axis=0, ddof=1) / np.sqrt(cfg.batches)
    return SimResult(s_hat, stderr, int(idle.sum()), succ.sum(axis=0), int(coll.sum()),
                     elapsed, batch_s)


@dataclass(frozen=True)
class CompareReport:
    s_analytic: np.ndarray
    s_hat: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    rel_err: np.ndarray
    z_max: float = 4.0
    rel_tol: float = 0.01

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= self.z_max) and np.all(self.rel_err <= self.rel_tol))

    def to_csv(self) -> str:
        rows = ((i + 1, self.s_analytic[i], self.s_hat[i], self.stderr[i], self.z[i])
                for i in range(self.z.size))
        return to_csv(("station", "s_analytic", "s_hat", "stderr", "z"), rows)


def assess(s_analytic, result: SimResult, z_max: float = 4.0, rel_tol: float = 0.01) -> CompareReport:
    s = np.asarray(s_analytic, dtype=float)
    diff = result.s_hat - s
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(result.stderr > 0, diff / result.stderr, np.where(diff == 0, 0.0, np.inf))
        rel = np.where(s > 0, np.abs(diff) / s, np.abs(diff))
    return CompareReport(s, result.s_hat, result.stderr, z, rel, z_max, rel_tol)


def compare(p: WlanParams, T: AttemptVector, cfg: SimConfig, threads: int = 1,
            z_max: float = 4.0, rel_tol: float = 0.01) -> CompareReport:
    """Analytic vs simulated throughput, with z = (s_hat - s) / stderr."""
    return assess(throughput(T, p).s, run_slots(p, T, cfg, threads), z_max, rel_tol)


def slot_frequencies(result: SimResult) -> np.ndarray:
    n = result.slots
    return np.array([result.idle, result.success.sum(), result.collision]) / n


def expected_frequencies(p: WlanParams, T: AttemptVector) -> np.ndarray:
    st = slot_stats(T, p)
    return np.array([st.p_idle, st.p_succ, st.p_coll])
