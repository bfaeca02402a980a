"""Sampling the rate region R(tau_bar), Pareto frontiers and figure data."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .csvfmt import to_csv
from .logconv import RESIDUAL_TOL, midpoint_witness
from .model import X_SURROGATE, AttemptVector, ThroughputVector, WlanParams, throughput_x

MAX_GRID_POINTS = 10_000_000
CHUNK = 65_536


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-station grid over [0, tau_bar_i].

    ``spacing="log-x"`` puts ``points - 1`` values uniformly in log x between
    ``x_min`` and the cap (X_SURROGATE when tau_bar_i = 1) and adds tau = 0.
    ``spacing="uniform-tau"`` is a plain linspace in tau.  ``axes`` overrides
    both with explicit tau values per station.
    """

    points: int = 201
    spacing: str = "log-x"
    x_min: float = 1e-6
    axes: tuple | None = None
    max_points: int = MAX_GRID_POINTS

    def axis_x(self, x_cap: float) -> np.ndarray:
        """Grid for one station in x coordinates (cap may be +inf)."""
        if self.points < 2:
            raise ValueError("grid needs at least 2 points per axis")
        hi = min(x_cap, X_SURROGATE)
        if hi <= 0:
            return np.zeros(1)
        if self.spacing == "log-x":
            lo = min(self.x_min, hi)
            inner = np.geomspace(lo, hi, self.points - 1)
            inner[-1] = hi
        elif self.spacing == "uniform-tau":
            t_hi = hi / (1.0 + hi)
            taus = np.linspace(0.0, t_hi, self.points)[1:]
            inner = taus / (1.0 - taus)
            inner[-1] = hi
        else:
            raise ValueError(f"unknown spacing {self.spacing!r}")
        return np.unique(np.concatenate(([0.0], inner)))

    def build_axes(self, p: WlanParams) -> list[np.ndarray]:
        if self.axes is not None:
            if len(self.axes) != p.n:
                raise ValueError("need one explicit axis per station")
            out = []
            for t, cap in zip(self.axes, p.tau_bar):
                t = np.asarray(t, dtype=float)
                if t.size < 2:
                    raise ValueError("grid needs at least 2 points per axis")
                if np.any(t < 0) or np.any(t > cap):
                    raise ValueError("explicit axis leaves [0, tau_bar]")
                with np.errstate(divide="ignore"):
                    x = np.where(t >= 1.0, X_SURROGATE, t / (1.0 - t))
                out.append(x)
            return out
        return [self.axis_x(xb) for xb in p.x_bar]


@dataclass(frozen=True)
class RegionSample:
    """Grid points in D(tau_bar) with their throughputs.

    ``x`` is the canonical coordinate; ``tau`` is derived from it.  ``s`` is
    raw throughput; ``values`` is what frontier and probes operate on (raw or
    divided by the PHY rate L_i / t_s, per ``normalization``).
    """

    x: np.ndarray
    s: np.ndarray
    grid: GridSpec
    normalization: str = "raw"
    index: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)
    shape: tuple = ()

    @property
    def tau(self) -> np.ndarray:
        return self.x / (1.0 + self.x)

    @property
    def values(self) -> np.ndarray:
        return self.s / self.scale

    def __len__(self) -> int:
        return self.x.shape[0]

    def point(self, i: int) -> tuple[AttemptVector, ThroughputVector]:
        return AttemptVector.from_x(self.x[i]), ThroughputVector.from_s(self.s[i])

    def subset(self, mask) -> "RegionSample":
        return RegionSample(self.x[mask], self.s[mask], self.grid, self.normalization,
                            self.index[mask], self.scale, self.shape)

    def coarse_mask(self) -> np.ndarray:
        """Points whose grid indices are all even (the half-resolution subgrid)."""
        idx = np.unravel_index(self.index, self.shape)
        return np.all(np.stack(idx) % 2 == 0, axis=0)


def _scale(p: WlanParams, normalization: str) -> np.ndarray:
    if normalization == "raw":
        return np.ones(p.n)
    if normalization == "phy-rate":
        return p.phy_rate.copy()
    raise ValueError(f"unknown normalization {normalization!r}")


def sample_region(p: WlanParams, grid: GridSpec | None = None, normalization: str = "raw",
                  threads: int = 1) -> RegionSample:
    """Cartesian grid over D(tau_bar) evaluated through the analytic model.

    Chunks are evaluated independently and placed by grid index, so the
    result does not depend on ``threads``.
    """
    grid = grid or GridSpec()
    scale = _scale(p, normalization)
    axes = grid.build_axes(p)
    shape = tuple(ax.size for ax in axes)
    total = int(np.prod(shape, dtype=np.int64))
    if total > grid.max_points:
        raise GridTooLargeError(f"grid has {total} points, cap is {grid.max_points}")

    x = np.empty((total, p.n))
    s = np.empty((total, p.n))

    def work(start):
        stop = min(start + CHUNK, total)
        idx = np.unravel_index(np.arange(start, stop), shape)
        xc = np.stack([axes[k][idx[k]] for k in range(p.n)], axis=-1)
        x[start:stop] = xc
        s[start:stop] = throughput_x(xc, p)

    starts = range(0, total, CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for st in starts:
            work(st)
    return RegionSample(x, s, grid, normalization, np.arange(total), scale, shape)


def _pareto_mask_2d(v: np.ndarray) -> np.ndarray:
    order = np.lexsort((-v[:, 1], -v[:, 0]))
    keep = np.zeros(len(v), dtype=bool)
    best = -np.inf
    prev = None
    for i in order:
        pt = (v[i, 0], v[i, 1])
        if pt[1] > best:
            keep[i] = True
            best = pt[1]
            prev = pt
        elif pt == prev:
            keep[i] = True
    return keep


def _dominated_by(cands: np.ndarray, front: np.ndarray) -> np.ndarray:
    if front.size == 0:
        return np.zeros(len(cands), dtype=bool)
    ge = np.all(front[None, :, :] >= cands[:, None, :], axis=-1)
    gt = np.any(front[None, :, :] > cands[:, None, :], axis=-1)
    return np.any(ge & gt, axis=1)


def pareto_mask(values: np.ndarray, block: int = 256) -> np.ndarray:
    """Boolean mask of points not dominated by any other point.

    A point dominates another when it is >= in every coordinate and > in
    at least one.  n = 2 uses a sort and sweep.  Otherwise points are
    visited in order of decreasing coordinate sum (a dominator always has a
    strictly larger sum) and checked against the frontier built so far.
    """
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return np.zeros(0, dtype=bool)
    if v.shape[1] == 2:
        return _pareto_mask_2d(v)
    order = np.argsort(-v.sum(axis=1), kind="stable")
    keep = np.zeros(len(v), dtype=bool)
    front = np.empty((0, v.shape[1]))
    for start in range(0, len(order), block):
        ids = order[start:start + block]
        cand = v[ids]
        alive = ~_dominated_by(cand, front)
        ids, cand = ids[alive], cand[alive]
        alive = ~_dominated_by(cand, cand)
        keep[ids[alive]] = True
        front = np.vstack([front, cand[alive]])
    return keep


def pareto_filter(sample: RegionSample) -> RegionSample:
    return sample.subset(pareto_mask(sample.values))


@dataclass
class NonConvexityCertificate:
    """Centroid of the single-station corners and how far the sample is from reaching it.

    margin = min over sample points of max_k (m_k - v_k); positive means no
    sampled point dominates the centroid m.  resolution estimates the grid
    error in margin as |margin - margin on the half-resolution subgrid|.
    frontier_gap is the largest Chebyshev distance between neighbouring
    frontier samples, for reference.
    """

    corners: np.ndarray
    midpoint: np.ndarray
    margin: float
    resolution: float
    frontier_gap: float
    closest: np.ndarray

    @property
    def certified(self) -> bool:
        return self.margin > 0 and self.margin >= 10.0 * self.resolution


def frontier_gap(front_values: np.ndarray) -> float:
    f = np.asarray(front_values, dtype=float)
    if len(f) < 2:
        return 0.0
    if f.shape[1] == 2:
        f = f[np.argsort(f[:, 0])]
        return float(np.max(np.max(np.abs(np.diff(f, axis=0)), axis=1)))
    worst = 0.0
    for start in range(0, len(f), 512):
        blk = f[start:start + 512]
        d = np.max(np.abs(blk[:, None, :] - f[None, :, :]), axis=-1)
        d[np.arange(len(blk)), np.arange(start, start + len(blk))] = np.inf
        worst = max(worst, float(np.max(np.min(d, axis=1))))
    return worst


def _corner_margin(v: np.ndarray):
    n = v.shape[1]
    corners = np.zeros((n, n))
    for i in range(n):
        solo = np.all(np.delete(v, i, axis=1) == 0, axis=1)
        if not np.any(solo):
            raise ValueError("sample has no single-station points; include tau = 0 in the grid")
        corners[i, i] = v[solo, i].max()
    mid = corners.mean(axis=0)
    gaps = np.max(mid[None, :] - v, axis=1)
    k = int(np.argmin(gaps))
    return corners, mid, float(gaps[k]), k


def nonconvexity_certificate(sample: RegionSample) -> NonConvexityCertificate:
    v = sample.values
    corners, mid, margin, k = _corner_margin(v)
    resolution = np.inf
    if sample.shape:
        coarse = v[sample.coarse_mask()]
        if len(coarse) < len(v):
            resolution = abs(margin - _corner_margin(coarse)[2])
    front = v[pareto_mask(v)]
    return NonConvexityCertificate(corners, mid, margin, float(resolution), frontier_gap(front),
                                   v[k].copy())


@dataclass
class ProbeReport:
    residuals: list = field(default_factory=list)
    in_box: list = field(default_factory=list)
    tol: float = RESIDUAL_TOL
    certificate: NonConvexityCertificate | None = None

    @property
    def trials(self) -> int:
        return len(self.residuals)

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol and all(self.in_box)


def convexity_probe(sample: RegionSample, p: WlanParams, trials: int, tol: float = RESIDUAL_TOL,
                    seed: int = 0, certificate: bool = True) -> ProbeReport:
    """Random log-midpoints between sampled interior points, each realised by a witness."""
    report = ProbeReport(tol=tol)
    if certificate and trials > 0:
        report.certificate = nonconvexity_certificate(sample)
    if trials == 0:
        return report
    interior = np.flatnonzero(np.all(sample.x > 0, axis=1))
    if interior.size == 0:
        raise ValueError("sample has no interior points")
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        i, j = rng.choice(interior, size=2)
        alpha = float(rng.uniform())
        w = midpoint_witness(AttemptVector.from_x(sample.x[i]), AttemptVector.from_x(sample.x[j]),
                             alpha, p)
        report.residuals.append(w.residual)
        report.in_box.append(w.in_box(p.tau_bar))
    return report


def region_csv(sample: RegionSample, frontier: np.ndarray) -> str:
    n = sample.x.shape[1]
    header = [f"tau{i + 1}" for i in range(n)] + [f"s{i + 1}" for i in range(n)] + ["frontier"]
    tau, vals = sample.tau, sample.values
    rows = (list(tau[r]) + list(vals[r]) + [int(frontier[r])] for r in range(len(sample)))
    return to_csv(header, rows)


def figure_data(p: WlanParams, resolution: int = 201, threads: int = 1,
                normalization: str = "phy-rate") -> dict[str, str]:
    """CSV payloads behind the two-station rate region and log rate region plots.

    By default throughput is normalised by the PHY rate L_i / t_s.
    ``logregion.csv`` omits points with a silent station (log 0 = -inf).
    """
    if p.n != 2:
        raise ValueError("figure data is defined for n = 2 only")
    sample = sample_region(p, GridSpec(points=resolution), normalization, threads)
    front = pareto_mask(sample.values)
    vals = sample.values
    interior = np.all(vals > 0, axis=1)
    logv = np.log(vals[interior])
    log_rows = (list(logv[r]) + [int(f)] for r, f in enumerate(front[interior]))
    fr = np.flatnonzero(front)
    fr = fr[np.argsort(vals[fr, 0])]
    front_rows = (list(sample.tau[r]) + list(vals[r]) for r in fr)
    return {
        "region.csv": region_csv(sample, front),
        "logregion.csv": to_csv(["log_s1", "log_s2", "frontier"], log_rows),
        "frontier.csv": to_csv(["tau1", "tau2", "s1", "s2"], front_rows),
    }
