"""Point patterns on a finite window.

Patterns are immutable: node ``i`` sits at ``positions[i]`` and carries an
origin label (``poisson``, ``grid`` or ``palm``). Samplers are pure functions
of their arguments and a seed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParameterError

ORIGINS = ("poisson", "grid", "palm")

# Sub-stream tags so that samplers sharing a seed stay independent.
_POISSON_TAG = 0x5051
_GRID_TAG = 0x4752


@dataclass(frozen=True)
class Window:
    width: float
    height: float
    boundary: str = "torus"
    margin: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ParameterError(f"window dimensions must be positive, got {self.width}x{self.height}")
        if self.boundary not in ("torus", "plane"):
            raise ParameterError(f"unknown boundary mode {self.boundary!r}")
        if not (0 <= self.margin < min(self.width, self.height) / 2):
            raise ParameterError(f"guard margin {self.margin} must lie in [0, min(width, height)/2)")

    @property
    def torus(self) -> bool:
        return self.boundary == "torus"

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> np.ndarray:
        return np.array([self.width / 2, self.height / 2])

    def contains(self, xy, guarded: bool = False) -> bool:
        xy = np.asarray(xy, dtype=float)
        m = self.margin if guarded else 0.0
        return bool(np.all((xy[..., 0] >= m) & (xy[..., 0] <= self.width - m)
                           & (xy[..., 1] >= m) & (xy[..., 1] <= self.height - m)))


@dataclass(frozen=True)
class NoiseSpec:
    """Thermal noise law: ``off`` (W=0), ``constant`` (W=level) or ``exponential`` (mean level)."""

    kind: str = "off"
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in ("off", "constant", "exponential"):
            raise ParameterError(f"unknown noise law {self.kind!r}")
        if self.kind == "off":
            object.__setattr__(self, "level", 0.0)
        elif not self.level > 0:
            raise ParameterError(f"noise level must be positive for {self.kind} noise")

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """Parse ``off``, ``constant:0.1`` or ``exponential:0.1``."""
        kind, _, level = text.strip().partition(":")
        try:
            return cls(kind.strip(), float(level) if level else 0.0)
        except ValueError as exc:
            raise ParameterError(f"bad noise spec {text!r}: {exc}") from None

    def __str__(self):
        return "off" if self.kind == "off" else f"{self.kind}:{self.level!r}"


@dataclass(frozen=True)
class ModelParams:
    lambda_m: float = 1.0
    grid_step: float | None = None
    aloha_p: float = 0.5
    fading_mu: float = 1.0
    threshold: float = 1.0
    pathloss_a: float = 1.0
    pathloss_beta: float = 4.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    window: Window = field(default_factory=lambda: Window(20.0, 20.0))
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.aloha_p < 1:
            raise ParameterError(f"aloha_p must lie in (0, 1), got {self.aloha_p}")
        if not self.pathloss_beta > 2:
            raise ParameterError(f"pathloss_beta must exceed 2, got {self.pathloss_beta}")
        if not self.fading_mu > 0:
            raise ParameterError(f"fading_mu must be positive, got {self.fading_mu}")
        if not self.threshold > 0:
            raise ParameterError(f"threshold must be positive, got {self.threshold}")
        if not self.pathloss_a > 0:
            raise ParameterError(f"pathloss_a must be positive, got {self.pathloss_a}")
        if self.lambda_m < 0:
            raise ParameterError(f"lambda_m must be non-negative, got {self.lambda_m}")
        if self.grid_step is not None and not self.grid_step > 0:
            raise ParameterError(f"grid_step must be positive, got {self.grid_step}")
        if isinstance(self.noise, str):
            object.__setattr__(self, "noise", NoiseSpec.parse(self.noise))
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    def pathloss(self, r):
        """l(r) = (A r)^beta."""
        return (self.pathloss_a * np.asarray(r, dtype=float)) ** self.pathloss_beta


class PointPattern:
    """Finite simple point pattern with dense integer ids."""

    def __init__(self, positions, origins, window: Window):
        pos = np.array(positions, dtype=float).reshape(-1, 2)
        org = np.array(origins, dtype="<U7").reshape(-1)
        if len(org) != len(pos):
            raise ParameterError("one origin label per point is required")
        if len(org) and not np.isin(org, ORIGINS).all():
            raise ParameterError(f"origin labels must be among {ORIGINS}")
        pos.setflags(write=False)
        org.setflags(write=False)
        self.positions = pos
        self.origins = org
        self.window = window
        self._dist = None

    def __len__(self):
        return len(self.positions)

    def __repr__(self):
        counts = {o: int((self.origins == o).sum()) for o in ORIGINS}
        return f"PointPattern(n={len(self)}, {counts}, window={self.window})"

    def __eq__(self, other):
        return (isinstance(other, PointPattern) and self.window == other.window
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.origins, other.origins))

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self))

    def distances(self) -> np.ndarray:
        """Dense n x n distance matrix under the window metric (cached)."""
        if self._dist is None:
            d = pairwise_distances(self.positions, self.positions, self.window)
            d.setflags(write=False)
            self._dist = d
        return self._dist

    def distances_from(self, xy) -> np.ndarray:
        return pairwise_distances(np.asarray(xy, dtype=float).reshape(1, 2), self.positions, self.window)[0]

    def nearest(self, xy) -> int:
        """Id of the point closest to ``xy``; ties go to the lowest id."""
        if len(self) == 0:
            raise DomainError("empty pattern has no nearest point")
        return int(np.argmin(self.distances_from(xy)))

    def to_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", "x", "y", "origin"])
        for i, ((x, y), o) in enumerate(zip(self.positions.tolist(), self.origins.tolist())):
            w.writerow([i, repr(x), repr(y), o])
        return out.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, fh, window: Window) -> "PointPattern":
        rows = list(csv.DictReader(fh))
        if [int(r["id"]) for r in rows] != list(range(len(rows))):
            raise ParameterError("pattern ids must be contiguous from 0")
        return cls([(float(r["x"]), float(r["y"])) for r in rows], [r["origin"] for r in rows], window)


def pairwise_distances(a: np.ndarray, b: np.ndarray, window: Window) -> np.ndarray:
    dx = np.abs(a[:, None, 0] - b[None, :, 0])
    dy = np.abs(a[:, None, 1] - b[None, :, 1])
    if window.torus:
        dx = np.minimum(dx, window.width - dx)
        dy = np.minimum(dy, window.height - dy)
    return np.sqrt(dx * dx + dy * dy)


def distance(x, y, window: Window) -> float:
    """Euclidean distance, wrapped around the torus when the window is one."""
    dx = abs(float(x[0]) - float(y[0]))
    dy = abs(float(x[1]) - float(y[1]))
    if window.torus:
        dx = min(dx, window.width - dx)
        dy = min(dy, window.height - dy)
    return math.sqrt(dx * dx + dy * dy)


def empty_pattern(window: Window) -> PointPattern:
    return PointPattern(np.empty((0, 2)), [], window)


def sample_poisson(intensity: float, window: Window, seed: int) -> PointPattern:
    if not intensity > 0:
        raise ParameterError(f"Poisson intensity must be positive, got {intensity}")
    rng = np.random.default_rng([int(seed), _POISSON_TAG])
    n = rng.poisson(intensity * window.area)
    xy = rng.random((n, 2)) * (window.width, window.height)
    return PointPattern(xy, ["poisson"] * n, window)


def sample_shifted_grid(step: float, window: Window, seed: int) -> PointPattern:
    """The lattice ``step * Z^2 + U`` with U uniform on [0, step)^2, clipped to the window."""
    if not step > 0:
        raise ParameterError(f"grid step must be positive, got {step}")
    nx, ny = window.width / step, window.height / step
    if window.torus and not (math.isclose(nx, round(nx), rel_tol=1e-9)
                             and math.isclose(ny, round(ny), rel_tol=1e-9)):
        raise ParameterError(f"torus window {window.width}x{window.height} is not a multiple of step {step}")
    rng = np.random.default_rng([int(seed), _GRID_TAG])
    shift = rng.random(2) * step
    xs = shift[0] + step * np.arange(math.ceil(nx) + 1)
    ys = shift[1] + step * np.arange(math.ceil(ny) + 1)
    xs = xs[xs < window.width]
    ys = ys[ys < window.height]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    xy = np.column_stack([gx.ravel(), gy.ravel()])
    return PointPattern(xy, ["grid"] * len(xy), window)


def superpose(a: PointPattern, b: PointPattern) -> PointPattern:
    if a.window != b.window:
        raise ParameterError("cannot superpose patterns on different windows")
    return PointPattern(np.vstack([a.positions, b.positions]),
                        np.concatenate([a.origins, b.origins]), a.window)


def palm_add(pattern: PointPattern, extra: Iterable[Sequence[float]]) -> PointPattern:
    """Prepend Palm points; they take ids 0..m-1 and existing ids shift by m."""
    extra = np.array(list(extra), dtype=float).reshape(-1, 2)
    win = pattern.window
    for k, xy in enumerate(extra):
        if not win.contains(xy):
            raise ParameterError(f"Palm point {tuple(xy)} lies outside the window")
        if len(pattern) and (pattern.distances_from(xy) == 0).any():
            raise ParameterError(f"Palm point {tuple(xy)} duplicates an existing point")
        if (np.all(extra[:k] == xy, axis=1)).any():
            raise ParameterError(f"duplicate Palm point {tuple(xy)}")
    return PointPattern(np.vstack([extra, pattern.positions]),
                        np.concatenate([np.full(len(extra), "palm"), pattern.origins]), win)


def sample_model(params: ModelParams, seed: int | None = None) -> PointPattern:
    """Poisson, or Poisson+Grid when ``params.grid_step`` is set, on ``params.window``."""
    seed = params.seed if seed is None else seed
    win = params.window
    parts = []
    if params.lambda_m > 0:
        parts.append(sample_poisson(params.lambda_m, win, seed))
    if params.grid_step is not None:
        parts.append(sample_shifted_grid(params.grid_step, win, seed))
    if not parts:
        raise ParameterError("model has neither a Poisson nor a grid component")
    out = parts[0]
    for p in parts[1:]:
        out = superpose(out, p)
    return out
