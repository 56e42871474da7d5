"""Compiled hot loops: union-find box labeling and cluster exploration.

Everything here works on linear site indices inside an axis-aligned box
(C order, axis 0 slowest) and queries edge openness through the keyed
hash directly, so no edge list or adjacency structure is materialized
unless an algorithm needs one.

The reach kernel at the bottom is the replica engine for the rare-event
experiments: it grows one cluster per replica inside a box, answering
monotone questions (did the cluster touch these sites, did it leave this
shell) without materializing the cluster.  Sites are packed into one
64-bit key and tracked in an epoch-stamped open-addressing table, so a
batch of a million mostly-dead replicas never pays for clearing.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .sampler import _nb_derive_replica_seed, _nb_edge_u_buf, _nb_fmix

_U64 = np.uint64


@njit(cache=True, inline="always")
def _uf_find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True, inline="always")
def _uf_union(parent, a, b):
    # lower root index wins, so final labels are the minimal member index
    ra = _uf_find(parent, a)
    rb = _uf_find(parent, b)
    if ra == rb:
        return
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb


@njit(cache=True)
def _collect_open_edges(seed, p, lo, dims, strides, cap):
    """Open in-box edges as (site, site+stride) index pairs.

    Returns the used count, or -1 if cap was too small (caller retries
    with a bigger buffer; the scan restarts from scratch so the result
    is independent of the initial guess).
    """
    d = dims.size
    n = 1
    for a in range(d):
        n *= dims[a]
    ea = np.empty(cap, dtype=np.int32)
    eb = np.empty(cap, dtype=np.int32)
    cnt = 0
    coords = np.empty(d, dtype=np.int64)
    off = np.empty(d, dtype=np.int64)
    words = np.zeros((4 * d + 8) // 8, dtype=np.uint64)
    for s in range(n):
        rem = s
        for a in range(d):
            off[a] = rem // strides[a]
            rem -= off[a] * strides[a]
            coords[a] = lo[a] + off[a]
        for a in range(d):
            if off[a] + 1 < dims[a]:
                u = _nb_edge_u_buf(_U64(seed), coords, a, d, words)
                if u < p:
                    if cnt >= cap:
                        return ea, eb, -1
                    ea[cnt] = s
                    eb[cnt] = s + strides[a]
                    cnt += 1
    return ea, eb, cnt


@njit(cache=True)
def _build_csr(n, ea, eb, m):
    off = np.zeros(n + 1, dtype=np.int64)
    for i in range(m):
        off[ea[i] + 1] += 1
        off[eb[i] + 1] += 1
    for v in range(n):
        off[v + 1] += off[v]
    adj_nbr = np.empty(2 * m, dtype=np.int32)
    adj_eid = np.empty(2 * m, dtype=np.int32)
    pos = off.copy()
    for i in range(m):
        a = ea[i]
        b = eb[i]
        adj_nbr[pos[a]] = b
        adj_eid[pos[a]] = i
        pos[a] += 1
        adj_nbr[pos[b]] = a
        adj_eid[pos[b]] = i
        pos[b] += 1
    return off, adj_nbr, adj_eid


@njit(cache=True)
def _bridges_by_lowlink(n, off, adj_nbr, adj_eid, m):
    """Bridge flags and connected-component roots by one iterative
    depth-first pass.  comp[v] is the minimal site index of v's
    ordinary cluster (roots are scanned in increasing order)."""
    disc = np.full(n, -1, dtype=np.int32)
    low = np.empty(n, dtype=np.int32)
    comp = np.empty(n, dtype=np.int32)
    is_bridge = np.zeros(m, dtype=np.uint8)
    stack_v = np.empty(n, dtype=np.int32)
    stack_pe = np.empty(n, dtype=np.int32)
    stack_it = np.empty(n, dtype=np.int64)
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        sp = 0
        stack_v[0] = root
        stack_pe[0] = -1
        stack_it[0] = off[root]
        disc[root] = timer
        low[root] = timer
        timer += 1
        comp[root] = root
        while sp >= 0:
            v = stack_v[sp]
            i = stack_it[sp]
            if i < off[v + 1]:
                stack_it[sp] = i + 1
                eid = adj_eid[i]
                if eid == stack_pe[sp]:
                    continue
                w = adj_nbr[i]
                if disc[w] == -1:
                    disc[w] = timer
                    low[w] = timer
                    timer += 1
                    comp[w] = root
                    sp += 1
                    stack_v[sp] = w
                    stack_pe[sp] = eid
                    stack_it[sp] = off[w]
                elif disc[w] < low[v]:
                    low[v] = disc[w]
            else:
                sp -= 1
                if sp >= 0:
                    u = stack_v[sp]
                    if low[v] < low[u]:
                        low[u] = low[v]
                    if low[v] > disc[u]:
                        is_bridge[stack_pe[sp + 1]] = 1
        # loop back for the next unvisited root
    return comp, is_bridge


@njit(cache=True)
def _labels_skipping_bridges(n, ea, eb, m, is_bridge):
    parent = np.arange(n, dtype=np.int32)
    for i in range(m):
        if not is_bridge[i]:
            _uf_union(parent, ea[i], eb[i])
    labels = np.empty(n, dtype=np.int32)
    for s in range(n):
        labels[s] = _uf_find(parent, s)
    return labels


@njit(cache=True)
def _slot_aggregates(slots, n_slots, strides, d, wlo, whi):
    """Per-slot site count and bounding box (in box-offset coordinates),
    restricted to the window [wlo, whi] per axis.  Slot -1 is skipped."""
    size = np.zeros(n_slots, dtype=np.int64)
    lo = np.full((n_slots, d), 1 << 40, dtype=np.int64)
    hi = np.full((n_slots, d), -(1 << 40), dtype=np.int64)
    n = slots.size
    off = np.empty(d, dtype=np.int64)
    for s in range(n):
        k = slots[s]
        if k < 0:
            continue
        rem = s
        inside = True
        for a in range(d):
            off[a] = rem // strides[a]
            rem -= off[a] * strides[a]
            if off[a] < wlo[a] or off[a] > whi[a]:
                inside = False
                break
        if not inside:
            continue
        size[k] += 1
        for a in range(d):
            if off[a] < lo[k, a]:
                lo[k, a] = off[a]
            if off[a] > hi[k, a]:
                hi[k, a] = off[a]
    return size, lo, hi


@njit(cache=True, inline="always")
def _table_insert(keys, stamp, tmask, epoch, key):
    """Claim key's slot for this epoch.  Returns True when key is new."""
    slot = np.int64(_nb_fmix(key) & tmask)
    while stamp[slot] == epoch:
        if keys[slot] == key:
            return False
        slot = (slot + 1) & np.int64(tmask)
    stamp[slot] = epoch
    keys[slot] = key
    return True


@njit(cache=True)
def _reach_batch(
    master,
    rep_lo,
    rep_hi,
    p,
    start,
    lo,
    hi,
    shifts,
    targets,
    marker_kind,
    marker_m,
    early_stop,
    max_sites,
    table_bits,
    rec_mode,
    rec_cap,
):
    """Grow the open cluster of `start` inside the box [lo, hi] for every
    replica in [rep_lo, rep_hi), all monotone bookkeeping included.

    Per-site questions are answered at insertion time, so each holds for
    the whole cluster-in-box once growth completes and is already final
    ("yes") the moment it fires, even if the site budget later runs out:

      - targets: was this site one of the k given sites (hit j)?
      - marker_kind 1: did the cluster reach L-inf distance >= marker_m
        from the origin?  marker_kind 2: coordinate 0 >= marker_m?

    A replica that exhausts max_sites counts as indeterminate for every
    question still unanswered.  With early_stop, growth halts once every
    requested question has fired, which cannot change any answer.

    rec_mode records replica indices (at most rec_cap per row) for exact
    Python rechecks downstream: 1 = rows are per-target hits, 2 = hits
    that also saw the marker, 3 = row 0 lists marker replicas.

    Returns (hits, indet_hits, both, both_indet, marker_count,
    marker_indet, truncated_count, sites_total, rec, rec_n); both[j]
    counts replicas where hit j and the marker both fired, and
    both_indet[j] those where truncation left that joint question open.
    """
    d = start.size
    kt = targets.shape[0]
    tsize = np.int64(1) << np.int64(table_bits)
    tmask = _U64(tsize - 1)
    keys = np.empty(tsize, dtype=np.uint64)
    stamp = np.zeros(tsize, dtype=np.int64)
    queue = np.empty(max_sites, dtype=np.uint64)
    coords = np.empty(d, dtype=np.int64)
    words = np.zeros((4 * d + 8) // 8, dtype=np.uint64)

    tkeys = np.empty(kt, dtype=np.uint64)
    for j in range(kt):
        k = _U64(0)
        for a in range(d):
            k |= _U64(targets[j, a] - lo[a]) << _U64(shifts[a])
        tkeys[j] = k
    start_key = _U64(0)
    for a in range(d):
        start_key |= _U64(start[a] - lo[a]) << _U64(shifts[a])

    hits = np.zeros(kt, dtype=np.int64)
    indet_hits = np.zeros(kt, dtype=np.int64)
    both = np.zeros(kt, dtype=np.int64)
    both_indet = np.zeros(kt, dtype=np.int64)
    hit_flag = np.zeros(kt, dtype=np.uint8)
    marker_count = np.int64(0)
    marker_indet = np.int64(0)
    trunc_count = np.int64(0)
    sites_total = np.int64(0)
    nrec = kt if kt > 0 else 1
    cap = rec_cap if rec_cap > 0 else 1
    rec = np.empty((nrec, cap), dtype=np.int64)
    rec_n = np.zeros(nrec, dtype=np.int64)

    want_marker = marker_kind != 0
    for rep in range(rep_lo, rep_hi):
        seed = _nb_derive_replica_seed(_U64(master), _U64(rep))
        epoch = rep - rep_lo + 1
        for j in range(kt):
            hit_flag[j] = 0
        n_hit = 0
        marker = False
        truncated = False

        _table_insert(keys, stamp, tmask, epoch, start_key)
        queue[0] = start_key
        qn = 1
        head = 0
        for j in range(kt):
            if start_key == tkeys[j]:
                hit_flag[j] = 1
                n_hit += 1
        if marker_kind == 1:
            mx = np.int64(0)
            for a in range(d):
                v = start[a] if start[a] >= 0 else -start[a]
                if v > mx:
                    mx = v
            marker = mx >= marker_m
        elif marker_kind == 2:
            marker = start[0] >= marker_m

        done = early_stop and n_hit == kt and (marker or not want_marker)
        while head < qn and not done:
            vkey = queue[head]
            head += 1
            for a in range(d):
                coords[a] = lo[a] + np.int64(
                    (vkey >> _U64(shifts[a])) & ((_U64(1) << _U64(shifts[a + 1] - shifts[a])) - _U64(1))
                )
            for a in range(d):
                ca = coords[a]
                for direction in range(2):
                    if direction == 0:
                        if ca >= hi[a]:
                            continue
                        u = _nb_edge_u_buf(seed, coords, a, d, words)
                        if u >= p:
                            continue
                        nkey = vkey + (_U64(1) << _U64(shifts[a]))
                        nca = ca + 1
                    else:
                        if ca <= lo[a]:
                            continue
                        coords[a] = ca - 1
                        u = _nb_edge_u_buf(seed, coords, a, d, words)
                        coords[a] = ca
                        if u >= p:
                            continue
                        nkey = vkey - (_U64(1) << _U64(shifts[a]))
                        nca = ca - 1
                    if not _table_insert(keys, stamp, tmask, epoch, nkey):
                        continue
                    if qn >= max_sites:
                        truncated = True
                        done = True
                        break
                    queue[qn] = nkey
                    qn += 1
                    for j in range(kt):
                        if nkey == tkeys[j] and hit_flag[j] == 0:
                            hit_flag[j] = 1
                            n_hit += 1
                    if not marker:
                        if marker_kind == 1:
                            mx = np.int64(0)
                            for b in range(d):
                                v = coords[b] if b != a else nca
                                if v < 0:
                                    v = -v
                                if v > mx:
                                    mx = v
                            marker = mx >= marker_m
                        elif marker_kind == 2:
                            v0 = coords[0] if a != 0 else nca
                            marker = v0 >= marker_m
                    if early_stop and n_hit == kt and (marker or not want_marker):
                        done = True
                        break
                if done:
                    break

        sites_total += qn
        if truncated:
            trunc_count += 1
        for j in range(kt):
            if hit_flag[j]:
                hits[j] += 1
                if marker:
                    both[j] += 1
                elif truncated:
                    both_indet[j] += 1
            elif truncated:
                indet_hits[j] += 1
                both_indet[j] += 1
        if marker:
            marker_count += 1
        elif truncated:
            marker_indet += 1
        if rec_mode == 1:
            for j in range(kt):
                if hit_flag[j] and rec_n[j] < cap:
                    rec[j, rec_n[j]] = rep
                    rec_n[j] += 1
        elif rec_mode == 2:
            for j in range(kt):
                if hit_flag[j] and marker and rec_n[j] < cap:
                    rec[j, rec_n[j]] = rep
                    rec_n[j] += 1
        elif rec_mode == 3:
            if marker and rec_n[0] < cap:
                rec[0, rec_n[0]] = rep
                rec_n[0] += 1

    return (
        hits,
        indet_hits,
        both,
        both_indet,
        marker_count,
        marker_indet,
        trunc_count,
        sites_total,
        rec,
        rec_n,
    )


@njit(cache=True)
def _box_union_labels(seed, p, lo, dims, strides):
    """Connected-component labels of the open subgraph inside a box.

    Streams every in-box edge once through the hash; memory is the two
    int32 arrays only.  Returned labels are the minimal linear site
    index of each cluster, which makes them run-order independent.
    """
    d = dims.size
    n = 1
    for a in range(d):
        n *= dims[a]
    parent = np.arange(n, dtype=np.int32)
    coords = np.empty(d, dtype=np.int64)
    off = np.empty(d, dtype=np.int64)
    words = np.zeros((4 * d + 8) // 8, dtype=np.uint64)
    for s in range(n):
        rem = s
        for a in range(d):
            off[a] = rem // strides[a]
            rem -= off[a] * strides[a]
            coords[a] = lo[a] + off[a]
        for a in range(d):
            if off[a] + 1 < dims[a]:
                u = _nb_edge_u_buf(_U64(seed), coords, a, d, words)
                if u < p:
                    _uf_union(parent, s, s + strides[a])
    labels = np.empty(n, dtype=np.int32)
    for s in range(n):
        labels[s] = _uf_find(parent, s)
    return labels
