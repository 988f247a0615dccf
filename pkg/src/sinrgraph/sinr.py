"""Shot-noise interference, SINR/SNR edges, degrees and path counts.

A ``SlotView`` freezes one slot of the space-time graph: who transmits, the
received power from every transmitter at every node and the per-receiver
total. Edges follow the threshold rule ``signal >= T * (noise + interference)``,
with self edges always present.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from . import _kernels as K
from .errors import DomainError, ParameterError
from .marks import NOISE_CODES, MarkStream
from .pointproc import ModelParams, PointPattern

VARIANTS = ("sinr", "snr")


def kernel_params(params: ModelParams):
    """Pack model constants for the compiled searches."""
    w = params.window
    prm = np.array([params.aloha_p, params.fading_mu, params.threshold, params.pathloss_a,
                    params.pathloss_beta, params.noise.level, w.width, w.height])
    flg = np.array([NOISE_CODES[params.noise.kind], int(w.torus)], dtype=np.int64)
    return prm, flg


def pathloss(d, params: ModelParams) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    return K.pathloss_array(d.ravel(), params.pathloss_a, params.pathloss_beta).reshape(d.shape)


class SlotView:
    """Immutable snapshot of slot ``slot`` for ``pattern`` under ``stream``."""

    def __init__(self, pattern: PointPattern, stream: MarkStream, slot: int):
        self.pattern = pattern
        self.stream = stream
        self.params = stream.params
        self.slot = int(slot)
        n = len(pattern)
        ids = pattern.ids
        self.tx_mask = stream.mac(ids, self.slot).astype(bool)
        self.tx_mask.setflags(write=False)
        self.transmitters = ids[self.tx_mask]
        tx = self.transmitters
        # power[a, j]: power received at j from the a-th transmitter (0 at itself)
        if n and len(tx):
            dist = pattern.distances()[tx]
            loss = pathloss(dist, self.params)
            f = stream.fading(tx[:, None], ids[None, :], self.slot, check=False)
            own = tx[:, None] == ids[None, :]
            power = np.where(own, 0.0, f / np.where(own, 1.0, loss))
        else:
            power = np.zeros((len(tx), n))
        power.setflags(write=False)
        self._power = power
        self._row = np.full(n, -1)
        self._row[tx] = np.arange(len(tx))
        self.total_power = power.sum(axis=0)
        self.total_power.setflags(write=False)
        self.noise = stream.noise(ids, self.slot)
        self._adj = {}

    def __repr__(self):
        return f"SlotView(slot={self.slot}, n={len(self.pattern)}, transmitters={len(self.transmitters)})"

    def at(self, slot: int) -> "SlotView":
        return SlotView(self.pattern, self.stream, slot)

    def signal(self, i: int, j: int) -> float:
        """F_ij / l(d_ij), whether or not i transmits."""
        if i == j:
            raise DomainError("no signal from a node to itself")
        r = self._row[i]
        if r >= 0:
            return float(self._power[r, j])
        d = self.pattern.distances()[i, j]
        return float(self.stream.fading(i, j, self.slot) / pathloss(d, self.params))

    def interference(self, j: int, exclude: int | None = None) -> float:
        """Sum of F_kj / l(d_kj) over transmitters k other than ``exclude`` and ``j``."""
        total = float(self.total_power[j])
        if exclude is not None and exclude != j and self._row[exclude] >= 0:
            total -= float(self._power[self._row[exclude], j])
        return max(total, 0.0)

    def sinr(self, i: int, j: int) -> float:
        if i == j:
            raise DomainError("SINR needs two distinct nodes")
        sig = self.signal(i, j)
        den = self.noise[j] + self.interference(j, exclude=i)
        return math.inf if den == 0 else sig / den

    def snr(self, i: int, j: int) -> float:
        if i == j:
            raise DomainError("SNR needs two distinct nodes")
        sig = self.signal(i, j)
        return math.inf if self.noise[j] == 0 else sig / self.noise[j]

    def edge(self, i: int, j: int, variant: str = "sinr") -> int:
        if variant not in VARIANTS:
            raise ParameterError(f"unknown edge variant {variant!r}")
        if i == j:
            return 1
        return int(self.adjacency(variant)[i, j])

    def adjacency(self, variant: str = "sinr") -> np.ndarray:
        """Boolean matrix of delta_ij at this slot, self edges included."""
        if variant not in VARIANTS:
            raise ParameterError(f"unknown edge variant {variant!r}")
        if variant in self._adj:
            return self._adj[variant]
        n = len(self.pattern)
        adj = np.zeros((n, n), dtype=bool)
        tx = self.transmitters
        if len(tx):
            T = self.params.threshold
            sig = self._power
            w = self.noise[None, :]
            if variant == "sinr":
                others = np.maximum(self.total_power[None, :] - sig, 0.0)
                ok = sig >= T * (w + others)
            else:
                ok = sig >= T * w
            ok &= ~self.tx_mask[None, :]
            adj[tx] = ok
        adj[np.arange(n), np.arange(n)] = True
        adj.setflags(write=False)
        self._adj[variant] = adj
        return adj


def interference(view: SlotView, receiver: int, exclude: int | None = None) -> float:
    return view.interference(receiver, exclude)


def sinr(view: SlotView, i: int, j: int) -> float:
    return view.sinr(i, j)


def edge(view: SlotView, i: int, j: int, variant: str = "sinr") -> int:
    return view.edge(i, j, variant)


def degree(view: SlotView, v: int, direction: str, variant: str = "sinr") -> int:
    """Out-degree of (v, slot), or in-degree of (v, slot) via the edges of slot - 1."""
    if direction == "out":
        return int(view.adjacency(variant)[v].sum())
    if direction == "in":
        return int(view.at(view.slot - 1).adjacency(variant)[:, v].sum())
    raise ParameterError(f"direction must be 'in' or 'out', got {direction!r}")


def path_count_vectors(pattern: PointPattern, stream: MarkStream, start_slot: int, k: int,
                       direction: str, variant: str = "sinr") -> np.ndarray:
    """H^{dir,k}(v, start_slot) for every node v, by slot-by-slot dynamic programming.

    Counts are float64; they are exact integers while below 2**53.
    """
    if k < 0:
        raise ParameterError("path length must be non-negative")
    n = len(pattern)
    h = np.ones(n)
    if direction == "out":
        for m in reversed(range(k)):
            h = SlotView(pattern, stream, start_slot + m).adjacency(variant).astype(float) @ h
    elif direction == "in":
        for m in range(k):
            h = h @ SlotView(pattern, stream, start_slot - k + m).adjacency(variant).astype(float)
    else:
        raise ParameterError(f"direction must be 'in' or 'out', got {direction!r}")
    return h


def count_paths(pattern: PointPattern, stream: MarkStream, v: int, start_slot: int, k: int,
                direction: str, variant: str = "sinr") -> int:
    """Number of directed k-edge paths leaving (or, for ``in``, ending at) vertex (v, start_slot)."""
    return int(path_count_vectors(pattern, stream, start_slot, k, direction, variant)[v])


def write_edge_list(fh, pattern: PointPattern, stream: MarkStream, slots, variants=VARIANTS):
    """Dump non-self edges as CSV ``slot,i,j,variant``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slot", "i", "j", "variant"])
    for s in slots:
        view = SlotView(pattern, stream, s)
        for var in variants:
            adj = view.adjacency(var).copy()
            np.fill_diagonal(adj, False)
            for i, j in zip(*np.nonzero(adj)):
                w.writerow([s, int(i), int(j), var])
