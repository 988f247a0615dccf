"""Compiled inner loops: keyed hashing, mark inversion and delay searches.

Every mark value in the package is produced here so that the dense
(``SlotView``) and the compiled delay paths see bit-identical marks.

Float parameters travel as one array ``prm``:
    [p, mu, T, A, beta, noise_level, width, height]
and integer flags as ``flg``: [noise_kind (0 off, 1 constant, 2 exponential), torus].
"""
import math

import numba as nb
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_C_NODE = np.uint64(0x243F6A8885A308D3)
_C_PEER = np.uint64(0x13198A2E03707344)
_C_SLOT = np.uint64(0xA4093822299F31D0)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_TWO_M53 = 2.0 ** -53

TAG_MAC = 1
TAG_FADING = 2
TAG_NOISE = 3

P_P, P_MU, P_T, P_A, P_BETA, P_W, P_WIDTH, P_HEIGHT = range(8)


@nb.njit(cache=True)
def mix64(x):
    x = x ^ (x >> _S30)
    x = x * _M1
    x = x ^ (x >> _S27)
    x = x * _M2
    return x ^ (x >> _S31)


@nb.njit(cache=True)
def stream_key(seed, tag):
    return mix64(mix64(np.uint64(seed) + _GOLD) ^ mix64(np.uint64(tag) * _GOLD))


@nb.njit(cache=True)
def _node_key(key, i):
    return mix64(np.uint64(key) ^ mix64(np.uint64(i) + _C_NODE))


@nb.njit(cache=True)
def _pair_key(key, i, j):
    return mix64(_node_key(key, i) ^ mix64(np.uint64(j) + _C_PEER))


@nb.njit(cache=True)
def _at_slot(k, slot):
    return mix64(k ^ mix64(np.uint64(slot) + _C_SLOT))


@nb.njit(cache=True)
def _to_uniform(h):
    # (k + 1) / 2^53 with k the top 53 bits: values in [2^-53, 1], never 0
    return float((h >> _S11) + _ONE) * _TWO_M53


@nb.njit(cache=True)
def uniform1(key, i, slot):
    return _to_uniform(_at_slot(_node_key(key, i), slot))


@nb.njit(cache=True)
def uniform2(key, i, j, slot):
    return _to_uniform(_at_slot(_pair_key(key, i, j), slot))


@nb.njit(cache=True)
def mac(key, i, slot, p):
    return uniform1(key, i, slot) <= p


@nb.njit(cache=True)
def fading(key, i, j, slot, mu):
    return -math.log(uniform2(key, i, j, slot)) / mu


@nb.njit(cache=True)
def noise(key, j, slot, kind, level):
    if kind == 0:
        return 0.0
    if kind == 1:
        return level
    return -math.log(uniform1(key, j, slot)) * level


@nb.njit(cache=True)
def pathloss(d, a, beta):
    return (a * d) ** beta


@nb.njit(cache=True)
def dist(x1, y1, x2, y2, torus, width, height):
    dx = abs(x1 - x2)
    dy = abs(y1 - y2)
    if torus:
        dx = min(dx, width - dx)
        dy = min(dy, height - dy)
    return math.sqrt(dx * dx + dy * dy)


# --- vectorised mark evaluation (flat, equal-length inputs) -----------------

@nb.njit(cache=True)
def uniform1_array(key, ids, slots):
    out = np.empty(ids.size)
    for k in range(ids.size):
        out[k] = uniform1(key, ids[k], slots[k])
    return out


@nb.njit(cache=True)
def uniform2_array(key, ii, jj, slots):
    out = np.empty(ii.size)
    for k in range(ii.size):
        out[k] = uniform2(key, ii[k], jj[k], slots[k])
    return out


@nb.njit(cache=True)
def exponential_of(u, scale):
    out = np.empty(u.size)
    for k in range(u.size):
        out[k] = -math.log(u[k]) * scale
    return out


@nb.njit(cache=True)
def pathloss_array(d, a, beta):
    out = np.empty(d.size)
    for k in range(d.size):
        out[k] = pathloss(d[k], a, beta)
    return out


@nb.njit(cache=True)
def key_array(seeds, tag):
    out = np.empty(seeds.size, dtype=np.uint64)
    for k in range(seeds.size):
        out[k] = stream_key(seeds[k], tag)
    return out


# --- delay searches ---------------------------------------------------------

@nb.njit(cache=True)
def _fails_interference(kmac, kfad, pos, prm, torus, i, j, slot, sig, w, order, order_loss):
    """True when the interference at ``j`` (all transmitters but ``i``) breaks SINR >= T.

    ``order`` lists the candidate interferers; nearest-first ordering makes the
    early exit cheap. ``order_loss`` may hold their path losses to ``j`` or be empty.
    """
    p, mu, T = prm[P_P], prm[P_MU], prm[P_T]
    a, beta = prm[P_A], prm[P_BETA]
    acc = 0.0
    have_loss = order_loss.size == order.size
    for c in range(order.size):
        k = order[c]
        if k == i or k == j:
            continue
        if mac(kmac, k, slot, p):
            if have_loss:
                lk = order_loss[c]
            else:
                lk = pathloss(dist(pos[k, 0], pos[k, 1], pos[j, 0], pos[j, 1], torus,
                                   prm[P_WIDTH], prm[P_HEIGHT]), a, beta)
            acc += fading(kfad, k, j, slot, mu) / lk
            if sig < T * (w + acc):
                return True
    return sig < T * (w + acc)


@nb.njit(cache=True)
def local_delay(kmac, kfad, knoise, pos, prm, flg, i, j, order, order_loss, start, horizon):
    """Waiting slots before the first i->j success, or -1 if none within ``horizon``."""
    p, mu, T = prm[P_P], prm[P_MU], prm[P_T]
    torus = flg[1] == 1
    lij = pathloss(dist(pos[i, 0], pos[i, 1], pos[j, 0], pos[j, 1], torus, prm[P_WIDTH], prm[P_HEIGHT]),
                   prm[P_A], prm[P_BETA])
    for k in range(horizon):
        s = start + k
        if not mac(kmac, i, s, p) or mac(kmac, j, s, p):
            continue
        sig = fading(kfad, i, j, s, mu) / lij
        w = noise(knoise, j, s, flg[0], prm[P_W])
        if sig < T * w:
            continue
        if not _fails_interference(kmac, kfad, pos, prm, torus, i, j, s, sig, w, order, order_loss):
            return k
    return -1


@nb.njit(cache=True)
def exit_delay(kmac, kfad, knoise, pos, prm, flg, i, cands, cand_loss, start, horizon):
    """First exit from ``i``: returns (slots or -1, trials, snr_trials or -1).

    ``cands`` holds every receiver that could pass the SNR test at all.
    """
    p, mu, T = prm[P_P], prm[P_MU], prm[P_T]
    torus = flg[1] == 1
    n = pos.shape[0]
    everyone = np.arange(n)
    empty = np.empty(0)
    trials = 0
    snr_trials = -1
    for k in range(horizon):
        s = start + k
        if not mac(kmac, i, s, p):
            continue
        trials += 1
        for c in range(cands.size):
            j = cands[c]
            if mac(kmac, j, s, p):
                continue
            sig = fading(kfad, i, j, s, mu) / cand_loss[c]
            w = noise(knoise, j, s, flg[0], prm[P_W])
            if sig < T * w:
                continue
            if snr_trials < 0:
                snr_trials = trials
            if not _fails_interference(kmac, kfad, pos, prm, torus, i, j, s, sig, w, everyone, empty):
                return k + 1, trials, snr_trials
    return -1, trials, snr_trials


@nb.njit(cache=True)
def flood(kmac, kfad, knoise, pos, prm, flg, src, targets, indptr, nbr, nbr_d, r_near, r_cand, start, horizon):
    """First-passage flooding from ``src``.

    Returns the arrival step (>= 1) of every target, 0 for ``src`` itself and
    -1 when not reached within ``horizon`` slots. ``indptr/nbr/nbr_d`` is a
    CSR list of neighbours within ``r_near`` sorted by distance; receivers
    farther than ``r_cand`` from a sender cannot pass the SNR test
    (``r_cand = inf`` disables that pruning).
    """
    p, mu, T = prm[P_P], prm[P_MU], prm[P_T]
    a, beta = prm[P_A], prm[P_BETA]
    width, height = prm[P_WIDTH], prm[P_HEIGHT]
    torus = flg[1] == 1
    n = pos.shape[0]
    prune = r_cand <= r_near
    arrival = np.full(targets.size, -1, dtype=np.int64)
    in_r = np.zeros(n, dtype=np.bool_)
    in_r[src] = True
    left = 0
    for t in range(targets.size):
        if targets[t] == src:
            arrival[t] = 0
        else:
            left += 1
    if left == 0:
        return arrival
    members = np.empty(n, dtype=np.int64)
    members[0] = src
    nm = 1
    # receivers within r_cand not yet reached, per member
    open_cnt = np.zeros(n, dtype=np.int64)
    if prune:
        for v in range(n):
            for q in range(indptr[v], indptr[v + 1]):
                if nbr_d[q] <= r_cand:
                    open_cnt[v] += 1
        for q in range(indptr[src], indptr[src + 1]):
            if nbr_d[q] <= r_cand:
                open_cnt[nbr[q]] -= 1
    e = np.empty(n, dtype=np.bool_)
    fresh = np.zeros(n, dtype=np.bool_)
    new = np.empty(n, dtype=np.int64)
    for m in range(horizon):
        s = start + m
        for v in range(n):
            e[v] = mac(kmac, v, s, p)
        nn = 0
        for u in range(nm):
            i = members[u]
            if not e[i] or (prune and open_cnt[i] == 0):
                continue
            if prune:
                lo, hi = indptr[i], indptr[i + 1]
            else:
                lo, hi = 0, n
            for q in range(lo, hi):
                if prune:
                    j = nbr[q]
                    if nbr_d[q] > r_cand:
                        break
                    dij = nbr_d[q]
                else:
                    j = q
                    if j == i:
                        continue
                    dij = dist(pos[i, 0], pos[i, 1], pos[j, 0], pos[j, 1], torus, width, height)
                if in_r[j] or e[j] or fresh[j]:
                    continue
                sig = fading(kfad, i, j, s, mu) / pathloss(dij, a, beta)
                w = noise(knoise, j, s, flg[0], prm[P_W])
                if sig < T * w:
                    continue
                # near interferers first, nearest first
                acc = 0.0
                bad = False
                for z in range(indptr[j], indptr[j + 1]):
                    k = nbr[z]
                    if k == i or not e[k]:
                        continue
                    acc += fading(kfad, k, j, s, mu) / pathloss(nbr_d[z], a, beta)
                    if sig < T * (w + acc):
                        bad = True
                        break
                if not bad:
                    for k in range(n):
                        if k == i or k == j or not e[k]:
                            continue
                        dk = dist(pos[k, 0], pos[k, 1], pos[j, 0], pos[j, 1], torus, width, height)
                        if dk <= r_near:
                            continue
                        acc += fading(kfad, k, j, s, mu) / pathloss(dk, a, beta)
                        if sig < T * (w + acc):
                            bad = True
                            break
                if not bad:
                    fresh[j] = True
                    new[nn] = j
                    nn += 1
        for c in range(nn):
            j = new[c]
            fresh[j] = False
            in_r[j] = True
            members[nm] = j
            nm += 1
            if prune:
                for q in range(indptr[j], indptr[j + 1]):
                    if nbr_d[q] > r_cand:
                        break
                    open_cnt[nbr[q]] -= 1
        if nn > 0:
            for t in range(targets.size):
                if arrival[t] < 0 and in_r[targets[t]]:
                    arrival[t] = m + 1
                    left -= 1
            if left == 0:
                break
    return arrival


@nb.njit(cache=True)
def dist_pairs(pos, ia, ib, torus, width, height):
    out = np.empty(ia.size)
    for k in range(ia.size):
        a, b = ia[k], ib[k]
        out[k] = dist(pos[a, 0], pos[a, 1], pos[b, 0], pos[b, 1], torus, width, height)
    return out
