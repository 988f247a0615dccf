"""Space-time marks as a keyed, counter-based function of (seed, kind, ids, slot).

Nothing is stored: ``e_i(n)``, ``F_ij(n)`` and ``W_j(n)`` are recomputed on
demand from a 64-bit hash of their key, so any slot (negative ones included)
can be revisited and concurrent workers need no coordination.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import _kernels as K
from .errors import DomainError
from .pointproc import ModelParams, PointPattern

NOISE_CODES = {"off": 0, "constant": 1, "exponential": 2}


def derive_seed(seed: int, *labels: int) -> int:
    """Deterministic child seed for replicate/stream bookkeeping."""
    h = np.uint64(int(seed) % 2**64)
    for lab in labels:
        h = np.uint64(K.stream_key(h, np.uint64(int(lab) % 2**64)))
    return int(h)


def _flat(*arrays):
    b = np.broadcast_arrays(*[np.asarray(a, dtype=np.int64) for a in arrays])
    return b[0].shape, [np.ascontiguousarray(x).ravel() for x in b]


class MarkStream:
    """Deterministic source of Aloha, fading and noise marks.

    ``fading_ppf`` optionally replaces the exponential fading law by any
    inverse CDF with finite mean; the compiled delay searches and the
    oracles only accept the exponential law.
    """

    def __init__(self, seed: int, params: ModelParams, fading_ppf: Callable | None = None):
        self.seed = int(seed) % 2**64
        self.params = params
        self.fading_ppf = fading_ppf
        s = np.uint64(self.seed)
        self.key_mac = np.uint64(K.stream_key(s, np.uint64(K.TAG_MAC)))
        self.key_fading = np.uint64(K.stream_key(s, np.uint64(K.TAG_FADING)))
        self.key_noise = np.uint64(K.stream_key(s, np.uint64(K.TAG_NOISE)))

    def __repr__(self):
        return f"MarkStream(seed={self.seed})"

    @property
    def exponential(self) -> bool:
        return self.fading_ppf is None

    def uniform_mac(self, i, slot):
        shape, (ii, ss) = _flat(i, slot)
        return K.uniform1_array(self.key_mac, ii, ss).reshape(shape)

    def mac(self, i, slot) -> np.ndarray:
        """Aloha indicators e_i(slot) as uint8 (broadcasts over ``i`` and ``slot``)."""
        return (self.uniform_mac(i, slot) <= self.params.aloha_p).astype(np.uint8)

    def fading(self, i, j, slot, check: bool = True) -> np.ndarray:
        shape, (ii, jj, ss) = _flat(i, j, slot)
        if check and (ii == jj).any():
            raise DomainError("fading F_ii is not part of the model")
        u = K.uniform2_array(self.key_fading, ii, jj, ss)
        if self.fading_ppf is None:
            f = K.exponential_of(u, 1.0 / self.params.fading_mu)
        else:
            f = np.asarray(self.fading_ppf(1.0 - u), dtype=float)
        return f.reshape(shape)

    def noise(self, j, slot) -> np.ndarray:
        shape, (jj, ss) = _flat(j, slot)
        spec = self.params.noise
        if spec.kind == "off":
            return np.zeros(shape)
        if spec.kind == "constant":
            return np.full(shape, spec.level)
        u = K.uniform1_array(self.key_noise, jj, ss)
        return K.exponential_of(u, spec.level).reshape(shape)

    def mark(self, kind: str, *ids: int, slot: int) -> float:
        """Single mark: ``mark("mac", i, slot=n)``, ``mark("fading", i, j, slot=n)``, ``mark("noise", j, slot=n)``."""
        if kind == "mac" and len(ids) == 1:
            return float(self.mac(ids[0], slot))
        if kind == "fading" and len(ids) == 2:
            if ids[0] == ids[1]:
                raise KeyError("fading is only defined between distinct nodes")
            return float(self.fading(ids[0], ids[1], slot))
        if kind == "noise" and len(ids) == 1:
            return float(self.noise(ids[0], slot))
        raise KeyError(f"bad mark key {kind}{ids}")

    def kernel_args(self):
        """Stream keys in the order the compiled searches expect them."""
        return self.key_mac, self.key_fading, self.key_noise


def mark(stream: MarkStream, kind: str, *ids: int, slot: int) -> float:
    return stream.mark(kind, *ids, slot=slot)


def transmitters(pattern: PointPattern, stream: MarkStream, slot: int) -> np.ndarray:
    """Ids with e_i(slot) = 1, ascending."""
    ids = pattern.ids
    return ids[stream.mac(ids, slot).astype(bool)]


def receivers(pattern: PointPattern, stream: MarkStream, slot: int) -> np.ndarray:
    ids = pattern.ids
    return ids[~stream.mac(ids, slot).astype(bool)]
