"""Numba kernels for robust value-iteration sweeps.

The per-pair routine realizes the 2-layer greedy mass allocation: seed
every successor with its lower bound, top blocks up to their lower bounds
cheapest-value-first, then spend the remaining mass in value order subject
to per-state and per-block upper bounds.  ``ascending=True`` computes the
minimizing adversary, ``False`` the maximizing one (reversed order).

Product structure is shared with the base abstraction: a pair's successor
states live in base-state space and are mapped to product nodes through
``next_z`` (DFA step on the successor's label) and the ``pidx`` table.
"""

import numpy as np
from numba import config, njit, prange

config.THREADING_LAYER = "omp"  # the bundled TBB is too old; avoid the probe warning

PARALLEL = True


@njit(cache=True)
def omax_pair(vals, lo, hi, blk, blk_lo, blk_hi, ascending):
    """Optimal adversary distribution for one pair; returns (gamma, obj, leftover).

    ``vals``: successor values; ``blk``: local block id per successor or -1;
    leftover mass > 0 signals an infeasible uncertainty set.
    """
    n = vals.shape[0]
    m = blk_lo.shape[0]
    if ascending:
        order = np.argsort(vals, kind="mergesort")
    else:
        order = np.argsort(-vals, kind="mergesort")
    g = lo.copy()
    gq = np.zeros(m)
    mass = 1.0
    for k in range(n):
        mass -= g[k]
        b = blk[k]
        if b >= 0:
            gq[b] += g[k]
    # top up each block to its lower bound, cheapest members first
    if m > 0:
        for t in range(n):
            k = order[t]
            b = blk[k]
            if b < 0:
                continue
            need = blk_lo[b] - gq[b]
            if need > 0.0:
                add = hi[k] - g[k]
                if add > need:
                    add = need
                if add > 0.0:
                    g[k] += add
                    gq[b] += add
                    mass -= add
    # distribute the remaining mass in value order
    if mass > 0.0:
        for t in range(n):
            k = order[t]
            room = hi[k] - g[k]
            b = blk[k]
            if b >= 0:
                broom = blk_hi[b] - gq[b]
                if broom < room:
                    room = broom
            if room > mass:
                room = mass
            if room > 0.0:
                g[k] += room
                mass -= room
                if b >= 0:
                    gq[b] += room
            if mass <= 1e-14:
                mass = 0.0
                break
    obj = 0.0
    for k in range(n):
        obj += g[k] * vals[k]
    if mass < 0.0:
        mass = -mass  # oversubscribed lower bounds are just as infeasible
    return g, obj, mass


@njit(cache=True)
def _pair_value(values, pair, z, succ_indptr, succ_state, succ_lo, succ_hi,
                succ_blk, blk_indptr, blk_lo, blk_hi, pidx, next_z, ascending):
    st = succ_indptr[pair]
    en = succ_indptr[pair + 1]
    n = en - st
    bst = blk_indptr[pair]
    ben = blk_indptr[pair + 1]
    vals = np.empty(n)
    for k in range(n):
        sp = succ_state[st + k]
        vals[k] = values[pidx[sp, next_z[z, sp]]]
    g, obj, leftover = omax_pair(
        vals, succ_lo[st:en], succ_hi[st:en], succ_blk[st:en],
        blk_lo[bst:ben], blk_hi[bst:ben], ascending)
    return obj, leftover


@njit(cache=True, parallel=PARALLEL)
def sweep_blocks(values, accepting, prod_s, prod_z, n_actions,
                 succ_indptr, succ_state, succ_lo, succ_hi, succ_blk,
                 blk_indptr, blk_lo, blk_hi, pidx, next_z, ascending,
                 out_values, out_actions, out_leftover):
    """One synchronous sweep of max-over-actions against the greedy adversary."""
    n_nodes = values.shape[0]
    for i in prange(n_nodes):
        if accepting[i]:
            out_values[i] = 1.0
            out_actions[i] = 0
            out_leftover[i] = 0.0
            continue
        s = prod_s[i]
        z = prod_z[i]
        best = -1.0
        besta = 0
        worst_leftover = 0.0
        for a in range(n_actions):
            obj, leftover = _pair_value(
                values, s * n_actions + a, z, succ_indptr, succ_state,
                succ_lo, succ_hi, succ_blk, blk_indptr, blk_lo, blk_hi,
                pidx, next_z, ascending)
            if leftover > worst_leftover:
                worst_leftover = leftover
            if obj > best:
                best = obj
                besta = a
        if best < 0.0:
            best = 0.0
        elif best > 1.0:
            best = 1.0
        out_values[i] = best
        out_actions[i] = besta
        out_leftover[i] = worst_leftover


@njit(cache=True)
def _contains_sorted(arr, lo, hi, x):
    """Binary search for x in arr[lo:hi] (ascending)."""
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        v = arr[mid]
        if v == x:
            return True
        if v < x:
            a = mid + 1
        else:
            b = mid
    return False


@njit(cache=True)
def _pair_value_implicit(values, pair, z, succ_indptr, succ_state, succ_lo,
                         succ_hi, pidx, next_z, prod_s, prod_z, global_order,
                         default_hi, ascending):
    """Interval-only adversary with implicit [0, default_hi] everywhere else.

    Explicit successors and the implicit remainder are merged in value
    order (two-pointer walk over the pair's sorted entries and the global
    value order of all product nodes).
    """
    st = succ_indptr[pair]
    en = succ_indptr[pair + 1]
    n = en - st
    vals = np.empty(n)
    for k in range(n):
        sp = succ_state[st + k]
        vals[k] = values[pidx[sp, next_z[z, sp]]]
    if ascending:
        order = np.argsort(vals, kind="mergesort")
    else:
        order = np.argsort(-vals, kind="mergesort")
    g = np.zeros(n)
    mass = 1.0
    for k in range(n):
        g[k] = succ_lo[st + k]
        mass -= g[k]
    obj = 0.0
    for k in range(n):
        obj += g[k] * vals[k]
    te = 0  # pointer into explicit sorted order
    tg = 0  # pointer into global order
    n_nodes = global_order.shape[0]
    while mass > 1e-14:
        # candidate explicit value
        have_e = te < n
        ev = 0.0
        if have_e:
            ev = vals[order[te]]
        # candidate implicit node: skip explicit members and z-mismatches
        have_g = False
        gv = 0.0
        node = -1
        while tg < n_nodes:
            node = global_order[tg]
            qs = prod_s[node]
            qz = prod_z[node]
            if qz == next_z[z, qs] and not _contains_sorted(succ_state, st, en, qs):
                have_g = True
                gv = values[node]
                break
            tg += 1
        if not have_e and not have_g:
            break
        take_explicit = have_e and (
            not have_g or (ev <= gv if ascending else ev >= gv))
        if take_explicit:
            k = order[te]
            room = succ_hi[st + k] - g[k]
            if room > mass:
                room = mass
            if room > 0.0:
                g[k] += room
                mass -= room
                obj += room * vals[k]
            te += 1
        else:
            room = default_hi
            if room > mass:
                room = mass
            obj += room * gv
            mass -= room
            tg += 1
    if mass < 0.0:
        mass = -mass  # oversubscribed lower bounds are just as infeasible
    return obj, mass


@njit(cache=True, parallel=PARALLEL)
def sweep_implicit(values, accepting, prod_s, prod_z, n_actions,
                   succ_indptr, succ_state, succ_lo, succ_hi,
                   pidx, next_z, global_order, default_hi, ascending,
                   out_values, out_actions, out_leftover):
    n_nodes = values.shape[0]
    for i in prange(n_nodes):
        if accepting[i]:
            out_values[i] = 1.0
            out_actions[i] = 0
            out_leftover[i] = 0.0
            continue
        s = prod_s[i]
        z = prod_z[i]
        best = -1.0
        besta = 0
        worst_leftover = 0.0
        for a in range(n_actions):
            obj, leftover = _pair_value_implicit(
                values, s * n_actions + a, z, succ_indptr, succ_state,
                succ_lo, succ_hi, pidx, next_z, prod_s, prod_z,
                global_order, default_hi, ascending)
            if leftover > worst_leftover:
                worst_leftover = leftover
            if obj > best:
                best = obj
                besta = a
        if best < 0.0:
            best = 0.0
        elif best > 1.0:
            best = 1.0
        out_values[i] = best
        out_actions[i] = besta
        out_leftover[i] = worst_leftover
