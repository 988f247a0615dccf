import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinrgraph.errors import DomainError, ParameterError
from sinrgraph.marks import MarkStream
from sinrgraph.pointproc import ModelParams, NoiseSpec, PointPattern, Window, sample_poisson
from sinrgraph.sinr import SlotView, count_paths, degree, edge, interference, path_count_vectors, sinr, write_edge_list


class FixedStream(MarkStream):
    """Marks pinned by hand: chosen transmitters, unit fading."""

    def __init__(self, params, tx, fading=1.0):
        super().__init__(0, params)
        self._tx = set(tx)
        self._f = fading

    def mac(self, i, slot):
        i, slot = np.broadcast_arrays(np.asarray(i), np.asarray(slot))
        return np.isin(i, list(self._tx)).astype(np.uint8)

    def fading(self, i, j, slot, check=True):
        shape = np.broadcast(np.asarray(i), np.asarray(j), np.asarray(slot)).shape
        return np.full(shape, self._f)


PLANE = Window(20, 20, "plane")


def view_of(points, tx, noise=NoiseSpec(), **kw):
    params = ModelParams(noise=noise, window=PLANE, **kw)
    pat = PointPattern(points, ["poisson"] * len(points), PLANE)
    return SlotView(pat, FixedStream(params, tx), 0)


def test_interference_examples():
    v = view_of([(5, 5), (7, 5)], tx=[])
    assert interference(v, 1) == 0
    v = view_of([(5, 5), (7, 5)], tx=[0])
    assert interference(v, 1) == pytest.approx(1 / 16)


def test_interference_decomposition():
    v = view_of([(5, 5), (7, 5), (5, 8), (9, 9)], tx=[0, 2, 3])
    for j in range(4):
        total = interference(v, j)
        for i in (0, 2, 3):
            if i != j:
                assert interference(v, j, exclude=i) + v.signal(i, j) == pytest.approx(total)


def test_sinr_examples():
    v = view_of([(5, 5), (7, 5), (9, 5)], tx=[0, 2])
    assert sinr(v, 0, 1) == pytest.approx(1.0)
    v = view_of([(5, 5), (7, 5)], tx=[0])
    assert sinr(v, 0, 1) == math.inf
    assert edge(v, 0, 1) == 1
    with pytest.raises(DomainError):
        sinr(v, 1, 1)


def test_edge_gating_and_self():
    v = view_of([(5, 5), (6, 5), (7, 5)], tx=[0])
    assert all(edge(v, i, i) == 1 for i in range(3))
    assert edge(v, 1, 0) == 0 and edge(v, 2, 0) == 0
    # a transmitter does not receive
    v = view_of([(5, 5), (6, 5)], tx=[0, 1])
    assert edge(v, 0, 1) == 0
    with pytest.raises(ParameterError):
        edge(v, 0, 1, "bogus")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_monotonicity(seed):
    win = Window(8, 8, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.01), window=win, threshold=0.3)
    pat = sample_poisson(1.0, win, seed)
    stream = MarkStream(seed, params)
    from dataclasses import replace
    v1 = SlotView(pat, stream, 0)
    v2 = SlotView(pat, MarkStream(seed, replace(params, threshold=0.6)), 0)
    a1, a2 = v1.adjacency(), v2.adjacency()
    assert not (a2 & ~a1).any()
    for i in v1.transmitters:
        for j in range(len(pat)):
            if i != j:
                for k in v1.transmitters:
                    if k not in (i, j):
                        # removing interferer k never lowers the SINR
                        den = v1.noise[j] + v1.interference(j, i) - v1.signal(k, j)
                        assert v1.signal(i, j) / max(den, 1e-300) >= v1.sinr(i, j) * (1 - 1e-12)


def test_inclusion_sampled():
    win = Window(20, 20, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win, threshold=0.5)
    pat = sample_poisson(1.0, win, 3)
    stream = MarkStream(3, params)
    rng = np.random.default_rng(0)
    n_edges = 0
    for s in range(100):
        v = SlotView(pat, stream, s)
        i, j = rng.integers(0, len(pat), 1000), rng.integers(0, len(pat), 1000)
        a, b = v.adjacency("sinr")[i, j], v.adjacency("snr")[i, j]
        assert not (a & ~b).any()
        n_edges += a.sum()
    assert n_edges > 0


@pytest.mark.parametrize("T,bound", [(0.5, 4), (1.0, 3)])
def test_in_degree_bounds(T, bound):
    win = Window(20, 20, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win, threshold=T)
    pat = sample_poisson(1.0, win, 5)
    stream = MarkStream(5, params)
    for s in range(1, 150):
        v = SlotView(pat, stream, s)
        indeg = v.adjacency().sum(axis=0)
        outdeg = v.adjacency().sum(axis=1)
        assert indeg.min() >= 1 and outdeg.min() >= 1
        assert indeg.max() <= bound
    assert degree(v, 0, "in") >= 1
    with pytest.raises(ParameterError):
        degree(v, 0, "sideways")


def test_in_degree_uses_previous_slot():
    win = Window(10, 10, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win)
    pat = sample_poisson(1.0, win, 2)
    stream = MarkStream(2, params)
    v = SlotView(pat, stream, 5)
    for node in range(len(pat)):
        assert degree(v, node, "in") == SlotView(pat, stream, 4).adjacency()[:, node].sum()
        assert degree(v, node, "out") == v.adjacency()[node].sum()


def brute_paths(pat, stream, v, n, k, direction):
    adj = {s: SlotView(pat, stream, s).adjacency() for s in range(n - k - 1, n + k + 1)}
    if k == 0:
        return 1
    total = 0
    if direction == "out":
        for w in np.nonzero(adj[n][v])[0]:
            total += brute_paths(pat, stream, w, n + 1, k - 1, "out") if k > 1 else 1
    else:
        for u in np.nonzero(adj[n - 1][:, v])[0]:
            total += brute_paths(pat, stream, u, n - 1, k - 1, "in") if k > 1 else 1
    return total


def test_count_paths_against_enumeration():
    win = Window(6, 6, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.05), window=win, threshold=0.5)
    pat = sample_poisson(1.0, win, 9)
    stream = MarkStream(9, params)
    for k in range(4):
        for v in range(len(pat)):
            for direction in ("out", "in"):
                assert count_paths(pat, stream, v, 10, k, direction) == brute_paths(pat, stream, v, 10, k, direction)
    v = SlotView(pat, stream, 10)
    assert np.array_equal(path_count_vectors(pat, stream, 10, 1, "out"), v.adjacency().sum(axis=1))
    with pytest.raises(ParameterError):
        count_paths(pat, stream, 0, 0, -1, "out")


def test_edge_list_dump(tmp_path):
    win = Window(10, 10, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win)
    pat = sample_poisson(1.0, win, 2)
    stream = MarkStream(2, params)
    path = tmp_path / "edges.csv"
    with open(path, "w") as fh:
        write_edge_list(fh, pat, stream, range(5))
    lines = path.read_text().splitlines()
    assert lines[0] == "slot,i,j,variant"
    n_sinr = sum(int(SlotView(pat, stream, s).adjacency().sum()) - len(pat) for s in range(5))
    assert sum(1 for l in lines[1:] if l.endswith(",sinr")) == n_sinr
