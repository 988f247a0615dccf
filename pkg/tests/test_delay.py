import io
import math

import numpy as np
import pytest
from scipy import stats

from sinrgraph import delay as D
from sinrgraph.errors import DomainError, ParameterError
from sinrgraph.experiments import discrete_ks
from sinrgraph.marks import MarkStream, derive_seed
from sinrgraph.pointproc import ModelParams, NoiseSpec, PointPattern, Window, empty_pattern, palm_add, sample_model, sample_poisson
from sinrgraph.sinr import SlotView

PLANE = Window(20, 20, "plane")


def pair(d=1.0, noise=NoiseSpec("constant", 0.1)):
    params = ModelParams(noise=noise, window=PLANE)
    pat = PointPattern([(5, 5), (5 + d, 5)], ["palm", "palm"], PLANE)
    return pat, params


def test_immediate_success_is_one():
    pat, params = pair()
    for seed in range(200):
        s = MarkStream(seed, params)
        out = D.local_delay(pat, s, 0, 1, 0, 1000)
        first = SlotView(pat, s, 0).edge(0, 1)
        assert (out.value == 1) == bool(first)


def test_isolated_pair_geometric():
    pat, params = pair()
    pi = 0.25 * math.exp(-0.1)
    vals = np.array([D.local_delay(pat, MarkStream(derive_seed(1, m), params), 0, 1, 0, 10**6).value
                     for m in range(100_000)])
    assert abs(vals.mean() - 1 / pi) < 0.01 / pi
    _, p = discrete_ks(vals, stats.geom(pi).cdf)
    assert p >= 0.01


def test_two_node_exit_and_end_to_end_equal_local():
    pat, params = pair()
    for seed in range(100):
        s = MarkStream(seed, params)
        loc = D.local_delay(pat, s, 0, 1, 3, 5000)
        assert D.exit_delay(pat, s, 0, 3, 5000).value == loc.value
        assert D.end_to_end(pat, s, pat.positions[0], pat.positions[1], 3, 5000).value == loc.value


def test_end_to_end_same_node_is_zero():
    pat, params = pair()
    out = D.end_to_end(pat, MarkStream(0, params), (5.1, 5), (4.9, 5.2), 0, 10)
    assert out.value == 0 and not out.censored
    with pytest.raises(DomainError):
        D.end_to_end(empty_pattern(PLANE), MarkStream(0, params), (1, 1), (2, 2))


def test_errors_and_degenerate():
    pat, params = pair()
    s = MarkStream(0, params)
    with pytest.raises(DomainError):
        D.local_delay(pat, s, 0, 0)
    with pytest.raises(DomainError):
        D.local_delay(pat, s, 0, 7)
    with pytest.raises(ParameterError):
        D.local_delay(pat, s, 0, 1, horizon=0)
    single = palm_add(empty_pattern(PLANE), [(1, 1)])
    out = D.exit_delay(single, s, 0)
    assert out.censored and out.flag == "isolated"


def test_censoring_convention():
    pat, params = pair(d=8.0)
    out = D.local_delay(pat, MarkStream(0, params), 0, 1, 0, 50)
    assert out.censored and out.value == 50
    assert out.exceeds(10) is True and out.exceeds(100) is None
    row = out.row()
    assert list(row) == D.CSV_FIELDS and row["censored"] == 1
    buf = io.StringIO()
    D.write_outcomes(buf, [out])
    assert buf.getvalue().splitlines()[0].startswith("kind,i,j,start,value,censored,trials,snr_trials,seed")


@pytest.mark.parametrize("noise", [NoiseSpec(), NoiseSpec("constant", 0.1), NoiseSpec("exponential", 0.1)])
@pytest.mark.parametrize("boundary", ["torus", "plane"])
def test_compiled_searches_match_dense_reference(noise, boundary):
    win = Window(8, 8, boundary)
    params = ModelParams(noise=noise, window=win)
    for seed in range(6):
        pat = sample_poisson(1.0, win, seed)
        if len(pat) < 3:
            continue
        s = MarkStream(seed, params)
        i, j = 0, int(np.argsort(pat.distances()[0])[1])
        start, horizon = 5, 300
        ref = -1
        for m in range(horizon):
            if SlotView(pat, s, start + m).edge(i, j):
                ref = m + 1
                break
        loc = D.local_delay(pat, s, i, j, start, horizon)
        assert (loc.value if not loc.censored else -1) == ref
        val, trials, snr = D._exit_general(pat, s, i, start, horizon)
        ex = D.exit_delay(pat, s, i, start, horizon)
        assert (ex.value if not ex.censored else -1) == val and ex.trials == trials
        if snr > 0:
            assert ex.snr_trials == snr
        targets = np.arange(len(pat))
        assert np.array_equal(D.first_passage(pat, s, i, targets, start, 60),
                              D._flood_general(pat, s, i, targets, start, 60))


def test_general_fading_falls_back():
    win = Window(8, 8, "plane")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win)
    pat = sample_poisson(1.0, win, 1)
    s = MarkStream(1, params, fading_ppf=lambda u: stats.gamma(2, scale=0.5).ppf(u))
    j = int(np.argsort(pat.distances()[0])[1])
    loc = D.local_delay(pat, s, 0, j, 0, 2000)
    ex = D.exit_delay(pat, s, 0, 0, 2000)
    e2e = D.end_to_end(pat, s, pat.positions[0], pat.positions[j], 0, 2000)
    assert ex.value <= e2e.value <= loc.value


def test_chain_and_sandwich():
    win = Window(20, 20, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win, threshold=0.5)
    pat = sample_poisson(1.0, win, 3)
    rng = np.random.default_rng(0)
    checked = 0
    for r in range(150):
        s = MarkStream(r, params)
        i = int(rng.integers(len(pat)))
        j = int(np.argsort(pat.distances()[i])[1 + r % 3])
        ex = D.exit_delay(pat, s, i, r, 20000)
        e2e = D.end_to_end(pat, s, pat.positions[i], pat.positions[j], r, 20000)
        loc = D.local_delay(pat, s, i, j, r, 20000)
        assert ex.snr_trials <= ex.trials <= ex.value
        if not loc.censored:
            assert ex.value <= e2e.value <= loc.value
            checked += 1
    assert checked > 100


def test_reach_sets_nested():
    win = Window(10, 10, "torus")
    params = ModelParams(noise=NoiseSpec("constant", 0.1), window=win)
    pat = sample_poisson(1.0, win, 4)
    sets = D.reach_sets(pat, MarkStream(4, params), 0, 0, 40)
    for a, b in zip(sets, sets[1:]):
        assert not (a & ~b).any()


def test_subadditivity():
    win = Window(20, 20, "torus")
    params = ModelParams(grid_step=2.0, noise=NoiseSpec("constant", 0.1), window=win)
    pat = sample_model(params, 2)
    s = MarkStream(2, params)
    x, z = (3.0, 3.0), (7.0, 4.0)
    rec = D.subadditivity_check(pat, s, x, x, z, 0, 50000)
    assert rec.conclusive and rec.satisfied and rec.lhs == rec.rhs
    rec = D.subadditivity_check(pat, s, x, z, x, 0, 50000)
    assert rec.lhs == 0 and rec.satisfied
    rng = np.random.default_rng(1)
    n = 0
    for r in range(150):
        pts = rng.uniform(0, 20, size=(3, 2))
        rec = D.subadditivity_check(pat, MarkStream(r, params), *pts, start=int(rng.integers(100)), horizon=50000)
        if rec.conclusive:
            n += 1
            assert rec.satisfied
    assert n > 100


def test_snr_cutoff_is_sound():
    params = ModelParams(noise=NoiseSpec("constant", 0.1))
    r = D.snr_cutoff(params)
    assert r == pytest.approx((D.MAX_UNIT_FADING / 0.1) ** 0.25, rel=1e-8)
    assert D.snr_cutoff(ModelParams()) == math.inf
