"""Compiled inner loops of the butterfly routing protocols.

Each kernel replays a protocol round by round from node-local rules only and
returns the cross-edge messages it generated (straight edges stay inside one
emulating node).  Rounds are relative to the start of the phase.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.core import types
from numba.typed import Dict


@njit(cache=True)
def _grow(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty((max(2 * a.shape[0], need), a.shape[1]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def combine_route(d, P, col, grp, gkey, tgt, record):
    """Random-rank routing with combining from level 0 to level d.

    ``col``/``grp`` describe the packets sitting at level 0, ``gkey`` is the
    contention key ``rank * G + group`` and ``tgt`` the level-d column of every
    group.  Returns ``(moves, lastdep, self_delays)`` where ``moves`` rows are
    ``(round, from_col, to_col, group, from_level, cross)`` (straight moves
    only when ``record`` is set).
    """
    npk = col.shape[0]
    G = tgt.shape[0]
    nbf = (d + 1) * P
    lastdep = np.full(nbf, -1, dtype=np.int64)
    moves = np.empty((max(16, npk), 6), dtype=np.int64)
    nm = 0
    self_delays = 0
    if npk == 0 or d == 0:
        return moves[:0], lastdep, self_delays
    lvl = np.zeros(npk, dtype=np.int64)
    c = col.copy()
    occ = Dict.empty(key_type=types.int64, value_type=types.int64)
    live = np.empty(npk, dtype=np.int64)
    nl = 0
    for k in range(npk):
        key = c[k] * G + grp[k]
        if key not in occ:
            occ[key] = k
            live[nl] = k
            nl += 1
    best = np.full(nbf * 2, -1, dtype=np.int64)
    touched = np.empty(nbf * 2, dtype=np.int64)
    t = 0
    while nl > 0:
        nt = 0
        for i in range(nl):
            k = live[i]
            g = grp[k]
            bit = 1 << lvl[k]
            e = 0 if (c[k] & bit) == (tgt[g] & bit) else 1
            slot = (lvl[k] * P + c[k]) * 2 + e
            b = best[slot]
            if b < 0:
                best[slot] = k
                touched[nt] = slot
                nt += 1
            elif gkey[g] < gkey[grp[b]]:
                best[slot] = k
            elif g == grp[b]:
                self_delays += 1
        # departures first, so an arrival never merges with a leaving packet
        for j in range(nt):
            k = best[touched[j]]
            x = lvl[k] * P + c[k]
            del occ[x * G + grp[k]]
        moves = _grow(moves, nm + nt)
        for j in range(nt):
            slot = touched[j]
            k = best[slot]
            best[slot] = -1
            l = lvl[k]
            e = slot & 1
            cc = c[k]
            nc = cc ^ (1 << l) if e == 1 else cc
            lastdep[l * P + cc] = t
            if e == 1 or record:
                moves[nm, 0] = t
                moves[nm, 1] = cc
                moves[nm, 2] = nc
                moves[nm, 3] = grp[k]
                moves[nm, 4] = l
                moves[nm, 5] = e
                nm += 1
            lvl[k] = l + 1
            c[k] = nc
            key = ((l + 1) * P + nc) * G + grp[k]
            if key in occ:
                lvl[k] = -1  # absorbed by the resident packet of its group
            else:
                occ[key] = k
        n2 = 0
        for i in range(nl):
            k = live[i]
            if lvl[k] >= 0 and lvl[k] < d:
                live[n2] = k
                n2 += 1
        nl = n2
        t += 1
    return moves[:nm], lastdep, self_delays


@njit(cache=True)
def spread_route(d, P, tn_x, tn_grp, gkey, task_start, task_child, task_cross, start_nodes):
    """Multicast spreading down recorded trees.

    Tree node ``i`` sits at BF index ``tn_x[i]``; its outgoing copies are the
    tasks ``task_start[i]..task_start[i+1]`` towards tree node
    ``task_child[j]``.  ``start_nodes`` hold their payload at round 0.
    Returns ``(arrival, moves, lastdep)`` with ``arrival[i] = -1`` for tree
    nodes never reached and moves rows ``(round, from_col, to_col, group)``.
    """
    ntn = tn_x.shape[0]
    ntask = task_child.shape[0]
    nbf = (d + 1) * P
    arrival = np.full(ntn, -1, dtype=np.int64)
    lastdep = np.full(nbf, -1, dtype=np.int64)
    moves = np.empty((max(16, ntask), 4), dtype=np.int64)
    nm = 0
    active = np.empty(max(1, ntask), dtype=np.int64)
    na = 0
    for s in range(start_nodes.shape[0]):
        i = start_nodes[s]
        arrival[i] = 0
        for j in range(task_start[i], task_start[i + 1]):
            active[na] = j
            na += 1
    task_node = np.empty(max(1, ntask), dtype=np.int64)
    for i in range(ntn):
        for j in range(task_start[i], task_start[i + 1]):
            task_node[j] = i
    best = np.full(nbf * 2, -1, dtype=np.int64)
    touched = np.empty(nbf * 2, dtype=np.int64)
    sent = np.zeros(max(1, ntask), dtype=np.bool_)
    newly = np.empty(max(1, ntask), dtype=np.int64)
    t = 0
    while na > 0:
        nt = 0
        for a in range(na):
            j = active[a]
            i = task_node[j]
            slot = tn_x[i] * 2 + task_cross[j]
            b = best[slot]
            if b < 0:
                best[slot] = j
                touched[nt] = slot
                nt += 1
            elif gkey[tn_grp[i]] < gkey[tn_grp[task_node[b]]]:
                best[slot] = j
        moves = _grow(moves, nm + nt)
        nn = 0
        for q in range(nt):
            slot = touched[q]
            j = best[slot]
            best[slot] = -1
            sent[j] = True
            i = task_node[j]
            x = tn_x[i]
            lastdep[x] = t
            ch = task_child[j]
            if task_cross[j] == 1:
                moves[nm, 0] = t
                moves[nm, 1] = x % P
                moves[nm, 2] = tn_x[ch] % P
                moves[nm, 3] = tn_grp[i]
                nm += 1
            arrival[ch] = t + 1
            for jj in range(task_start[ch], task_start[ch + 1]):
                newly[nn] = jj
                nn += 1
        n2 = 0
        for a in range(na):
            j = active[a]
            if not sent[j]:
                active[n2] = j
                n2 += 1
        for q in range(nn):
            active[n2] = newly[q]
            n2 += 1
        na = n2
        t += 1
    return arrival, moves[:nm], lastdep


@njit(cache=True)
def spill_rounds(src, desired, cap):
    """Per-sender deferral so nobody exceeds ``cap`` sends in a round.

    Input must be sorted by ``(src, desired)``; returns assigned rounds.
    """
    m = src.shape[0]
    out = np.empty(m, dtype=np.int64)
    start = 0
    for k in range(m):
        if k > 0 and src[k] != src[k - 1]:
            start = k
        a = desired[k]
        if k - start >= cap:
            prev = out[k - cap] + 1
            if prev > a:
                a = prev
        out[k] = a
    return out
