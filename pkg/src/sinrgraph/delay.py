"""Local, exit and end-to-end delays on the space-time SINR graph.

Counting convention: a local delay is the number of edges of the
stay-then-jump path, i.e. ``1 + (slots waited)``, so that given the pattern
it is geometric on {1, 2, ...} with mean ``1 / pi_ij``. End-to-end delays are
first-passage times of flooding; the source reaches itself in 0 steps.

Searches stop after ``horizon`` slots. A censored outcome stores
``value = horizon`` and means "more than ``horizon``".
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import DomainError, ParameterError
from .marks import MarkStream
from .pointproc import ModelParams, PointPattern
from .sinr import SlotView, kernel_params, pathloss

CSV_FIELDS = ["kind", "i", "j", "start", "value", "censored", "trials", "snr_trials", "seed", "snr_censored"]

# Largest fading value the 53-bit uniform grid can produce for unit mean.
MAX_UNIT_FADING = 53 * math.log(2)


@dataclass(frozen=True)
class DelayOutcome:
    kind: str
    value: int
    censored: bool
    horizon: int
    i: int
    j: int | None = None
    start: int = 0
    trials: int | None = None
    snr_trials: int | None = None
    snr_censored: bool = False
    flag: str = ""
    seed: int | None = None

    def exceeds(self, q: float) -> bool | None:
        """Whether value > q; None when censoring leaves it undecided."""
        if not self.censored:
            return self.value > q
        return True if self.horizon >= q else None

    def snr_exceeds(self, q: float) -> bool | None:
        if self.snr_trials is None:
            return None
        if not self.snr_censored:
            return self.snr_trials > q
        return True if self.snr_trials >= q else None

    def row(self) -> dict:
        d = asdict(self)
        return {k: ("" if d[k] is None else int(d[k]) if isinstance(d[k], bool) else d[k]) for k in CSV_FIELDS}


def write_outcomes(fh, outcomes) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for o in outcomes:
        w.writerow(o.row())


def snr_cutoff(params: ModelParams) -> float:
    """Distance beyond which no SNR edge can exist (inf unless noise is a positive constant)."""
    if params.noise.kind != "constant":
        return math.inf
    f_max = MAX_UNIT_FADING / params.fading_mu
    r = (f_max / (params.threshold * params.noise.level)) ** (1 / params.pathloss_beta) / params.pathloss_a
    return r * (1 + 1e-9)


def _cache(pattern: PointPattern) -> dict:
    return pattern.__dict__.setdefault("_delay_cache", {})


def neighbor_lists(pattern: PointPattern, radius: float):
    """CSR arrays (indptr, nbr, dist) of neighbours within ``radius``, nearest first."""
    key = ("csr", radius)
    cache = _cache(pattern)
    if key in cache:
        return cache[key]
    win = pattern.window
    n = len(pattern)
    pos = np.ascontiguousarray(pattern.positions)
    if win.torus:
        tree = cKDTree(np.mod(pos, (win.width, win.height)), boxsize=(win.width, win.height))
    else:
        tree = cKDTree(pos)
    pairs = tree.query_pairs(radius * (1 + 1e-9) + 1e-12, output_type="ndarray")
    a = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
    b = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
    d = K.dist_pairs(pos, a, b, win.torus, win.width, win.height)
    keep = d <= radius
    a, b, d = a[keep], b[keep], d[keep]
    order = np.lexsort((b, d, a))
    a, b, d = a[order], b[order], d[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(a, minlength=n), out=indptr[1:])
    cache[key] = (indptr, np.ascontiguousarray(b), np.ascontiguousarray(d))
    return cache[key]


def _order_from(pattern: PointPattern, j: int, exclude=()):
    """All other nodes sorted by distance to ``j`` with their path losses to ``j``."""
    d = pattern.distances_from(pattern.positions[j])
    idx = np.argsort(d, kind="stable")
    drop = np.isin(idx, [j, *exclude])
    idx = idx[~drop]
    return np.ascontiguousarray(idx.astype(np.int64)), d[idx]


def _near_radius(pattern: PointPattern, params: ModelParams, target: int = 40) -> float:
    win = pattern.window
    dens = max(len(pattern), 1) / win.area
    r = math.sqrt(target / (math.pi * dens))
    cut = snr_cutoff(params)
    if math.isfinite(cut):
        r = max(r, cut)
    return min(r, math.hypot(win.width, win.height))


def _check_pair(pattern, i, j):
    n = len(pattern)
    if not (0 <= i < n and 0 <= j < n):
        raise DomainError(f"node ids {i}, {j} out of range for {n} points")
    if i == j:
        raise DomainError("local delay needs two distinct nodes")


def local_delay(pattern: PointPattern, stream: MarkStream, i: int, j: int, start: int = 0,
                horizon: int = 10_000) -> DelayOutcome:
    _check_pair(pattern, i, j)
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    params = stream.params
    if stream.exponential:
        order, d = _order_from(pattern, j, exclude=(i,))
        prm, flg = kernel_params(params)
        k = K.local_delay(*stream.kernel_args(), pattern.positions, prm, flg, i, j, order,
                          pathloss(d, params), start, horizon)
    else:
        k = -1
        for m in range(horizon):
            if SlotView(pattern, stream, start + m).edge(i, j):
                k = m
                break
    if k < 0:
        return DelayOutcome("local", horizon, True, horizon, i, j, start, seed=stream.seed)
    return DelayOutcome("local", k + 1, False, horizon, i, j, start, seed=stream.seed)


def exit_delay(pattern: PointPattern, stream: MarkStream, i: int, start: int = 0,
               horizon: int = 10_000) -> DelayOutcome:
    """Exit delay of node ``i`` with its SINR and SNR trial counts."""
    n = len(pattern)
    if not 0 <= i < n:
        raise DomainError(f"node id {i} out of range for {n} points")
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    if n < 2:
        return DelayOutcome("exit", horizon, True, horizon, i, None, start, 0, 0, True,
                            flag="isolated", seed=stream.seed)
    params = stream.params
    if stream.exponential:
        cut = snr_cutoff(params)
        cands, d = _order_from(pattern, i)
        keep = d <= cut
        prm, flg = kernel_params(params)
        value, trials, snr = K.exit_delay(*stream.kernel_args(), pattern.positions, prm, flg, i,
                                          cands[keep], pathloss(d[keep], params), start, horizon)
    else:
        value, trials, snr = _exit_general(pattern, stream, i, start, horizon)
    censored = value < 0
    snr_censored = snr < 0
    return DelayOutcome("exit", horizon if censored else int(value), censored, horizon, i, None, start,
                        int(trials), int(trials if snr_censored else snr), snr_censored, seed=stream.seed)


def _exit_general(pattern, stream, i, start, horizon):
    trials, snr = 0, -1
    for m in range(horizon):
        view = SlotView(pattern, stream, start + m)
        if not view.tx_mask[i]:
            continue
        trials += 1
        if snr < 0 and view.adjacency("snr")[i].sum() > 1:
            snr = trials
        if view.adjacency("sinr")[i].sum() > 1:
            return m + 1, trials, snr
    return -1, trials, snr


def first_passage(pattern: PointPattern, stream: MarkStream, src: int, targets, start: int = 0,
                  horizon: int = 10_000) -> np.ndarray:
    """Flooding arrival steps from node ``src`` to each target id (-1 when not reached)."""
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    params = stream.params
    if not stream.exponential:
        return _flood_general(pattern, stream, src, targets, start, horizon)
    r_near = _near_radius(pattern, params)
    indptr, nbr, nd = neighbor_lists(pattern, r_near)
    prm, flg = kernel_params(params)
    return K.flood(*stream.kernel_args(), pattern.positions, prm, flg, int(src), targets,
                   indptr, nbr, nd, r_near, snr_cutoff(params), start, horizon)


def _flood_general(pattern, stream, src, targets, start, horizon):
    reach = np.zeros(len(pattern), dtype=bool)
    reach[src] = True
    out = np.where(targets == src, 0, -1)
    for m in range(horizon):
        if (out >= 0).all():
            break
        adj = SlotView(pattern, stream, start + m).adjacency("sinr")
        reach = reach | adj[reach].any(axis=0)
        out = np.where((out < 0) & reach[targets], m + 1, out)
    return out


def reach_sets(pattern: PointPattern, stream: MarkStream, src: int, start: int, steps: int):
    """Boolean reach sets R_0..R_steps of flooding from ``src`` (dense; for small patterns)."""
    reach = np.zeros(len(pattern), dtype=bool)
    reach[src] = True
    sets = [reach.copy()]
    for m in range(steps):
        adj = SlotView(pattern, stream, start + m).adjacency("sinr")
        reach = reach | adj[reach].any(axis=0)
        sets.append(reach.copy())
    return sets


def end_to_end(pattern: PointPattern, stream: MarkStream, x, y, start: int = 0,
               horizon: int = 10_000) -> DelayOutcome:
    """Delay P(x, y, start) between the points nearest to ``x`` and ``y``."""
    if len(pattern) == 0:
        raise DomainError("end-to-end delay on an empty pattern")
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    src, dst = pattern.nearest(x), pattern.nearest(y)
    if src == dst:
        return DelayOutcome("end_to_end", 0, False, horizon, src, dst, start, seed=stream.seed)
    arr = int(first_passage(pattern, stream, src, [dst], start, horizon)[0])
    if arr < 0:
        return DelayOutcome("end_to_end", horizon, True, horizon, src, dst, start, seed=stream.seed)
    return DelayOutcome("end_to_end", arr, False, horizon, src, dst, start, seed=stream.seed)


@dataclass(frozen=True)
class SubadditivityRecord:
    lhs: int | None
    rhs: int | None
    satisfied: bool | None
    conclusive: bool


def subadditivity_check(pattern: PointPattern, stream: MarkStream, x, y, z, start: int = 0,
                        horizon: int = 10_000) -> SubadditivityRecord:
    """Compare P(x,z,n) with P(x,y,n) + P(y,z,n+P(x,y,n)) on one mark realisation."""
    xy = end_to_end(pattern, stream, x, y, start, horizon)
    xz = end_to_end(pattern, stream, x, z, start, horizon)
    if xy.censored:
        return SubadditivityRecord(None, None, None, False)
    yz = end_to_end(pattern, stream, y, z, start + xy.value, horizon)
    if xz.censored or yz.censored:
        return SubadditivityRecord(None, None, None, False)
    rhs = xy.value + yz.value
    return SubadditivityRecord(xz.value, rhs, xz.value <= rhs, True)
