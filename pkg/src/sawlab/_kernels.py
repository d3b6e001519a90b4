"""Compiled inner loops: enumeration DFS, weakly-SAW Metropolis, pivot SAW.

Conventions shared with :mod:`sawlab.walk`:

* step code ``c`` is the unit vector ``(1 - 2*(c % 2)) * e_{c // 2}``;
* a lattice symmetry ``g`` is a pair of rows ``perms[g], signs[g]`` acting as
  ``(g x)[b] = signs[g, b] * x[perms[g, b]]``; row 0 is the identity;
* every site of an n-step walk from the origin has coordinates in [-n, n], so
  ``key = sum_b (x_b + n) * (2n+1)**b`` is a collision-free site key.

Hash tables use open addressing with linear probing; an empty slot holds key -1.
All kernels release the GIL.
"""

import numpy as np
from numba import njit

EMPTY = -1


@njit(nogil=True, cache=True, inline="always")
def _slot(keys, key):
    mask = keys.size - 1
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    i = np.int64(h >> np.uint64(32)) & mask
    while True:
        k = keys[i]
        if k == key or k == EMPTY:
            return i
        i = (i + 1) & mask


@njit(nogil=True, cache=True, inline="always")
def _site_key(sites, j, d, n):
    base = 2 * n + 1
    key = 0
    mult = 1
    for b in range(d):
        key += (sites[j, b] + n) * mult
        mult *= base
    return key


@njit(nogil=True, cache=True)
def _table_capacity(n):
    cap = 16
    while cap < 8 * (n + 1):
        cap *= 2
    return cap


@njit(nogil=True, cache=True)
def _add_sites(keys, vals, used, sites, lo, d, n, delta):
    """Add ``delta`` visits at each of ``sites[lo..n]``.

    Returns the sum of the counts found just before each update.  The loop is
    kept in one function on purpose: per-site helper calls cost ~10x more.
    """
    total = 0
    for j in range(lo, n + 1):
        key = _site_key(sites, j, d, n)
        i = _slot(keys, key)
        if keys[i] == EMPTY:
            keys[i] = key
            vals[i] = 0
            used[0] += 1
        old = vals[i]
        vals[i] = old + delta
        total += old
    return total


@njit(nogil=True, cache=True)
def _rebuild_counts(keys, vals, used, sites, d, n):
    keys[:] = EMPTY
    vals[:] = 0
    used[0] = 0
    return _add_sites(keys, vals, used, sites, 0, d, n, 1)


@njit(nogil=True, cache=True)
def _sites_from_codes(codes, d, n, sites):
    for b in range(d):
        sites[0, b] = 0
    for j in range(n):
        c = codes[j]
        for b in range(d):
            sites[j + 1, b] = sites[j, b]
        sites[j + 1, c // 2] += 1 - 2 * (c % 2)


@njit(nogil=True, cache=True, inline="always")
def _energy(J, beta, lo, hi, kappa):
    e = beta * J
    if J < lo:
        e += kappa * (lo - J)
    elif J > hi:
        e += kappa * (J - hi)
    return e


@njit(nogil=True, cache=True, inline="always")
def _map_code(c, g, signs, invperms):
    b = invperms[g, c // 2]
    v = signs[g, b] * (1 - 2 * (c % 2))
    return 2 * b + (1 if v < 0 else 0)


@njit(nogil=True, cache=True)
def _record(sites, codes, d, n, sweep_idx, out_r2, out_hull2):
    r2 = 0
    for b in range(d):
        r2 += sites[n, b] * sites[n, b]
    h2 = 0
    for j in range(n + 1):
        s = 0
        for b in range(d):
            s += sites[j, b] * sites[j, b]
        if s > h2:
            h2 = s
    out_r2[sweep_idx] = r2
    out_hull2[sweep_idx] = h2


# ---------------------------------------------------------------------------
# Exhaustive enumeration
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def enumerate_branch(d, n, prefix, weight, axes_used, hist):
    """Accumulate ``hist[J, |S_n|^2] += multiplicity`` over canonical walks.

    Walks are enumerated up to lattice symmetry: the first step along a
    not-yet-used axis is always ``+e_k`` for the next unused axis k and carries
    multiplicity ``2(d - k)``.  ``prefix`` fixes the first steps (already in
    canonical form, with accumulated ``weight`` and ``axes_used``).
    """
    base = 2 * n + 1
    size = base ** d
    counts = np.zeros(size, dtype=np.int64)
    pos = np.zeros((n + 1, d), dtype=np.int64)
    key = np.zeros(n + 1, dtype=np.int64)
    Jst = np.zeros(n + 1, dtype=np.int64)
    kst = np.zeros(n + 1, dtype=np.int64)
    wst = np.zeros(n + 1, dtype=np.int64)
    opt = np.zeros(n + 1, dtype=np.int64)

    p = prefix.size
    key[0] = _site_key(pos, 0, d, n)
    counts[key[0]] = 1
    J = 0
    for t in range(p):
        c = prefix[t]
        for b in range(d):
            pos[t + 1, b] = pos[t, b]
        pos[t + 1, c // 2] += 1 - 2 * (c % 2)
        key[t + 1] = _site_key(pos, t + 1, d, n)
        J += counts[key[t + 1]]
        counts[key[t + 1]] += 1
    t = p
    Jst[t] = J
    kst[t] = axes_used
    wst[t] = weight
    opt[t] = 0
    while True:
        if t == n:
            r2 = 0
            for b in range(d):
                r2 += pos[t, b] * pos[t, b]
            hist[Jst[t], r2] += wst[t]
            counts[key[t]] -= 1
            t -= 1
            if t < p:
                break
            continue
        k = kst[t]
        nopts = 2 * k + (1 if k < d else 0)
        o = opt[t]
        if o >= nopts:
            if t == p:
                break
            counts[key[t]] -= 1
            t -= 1
            continue
        opt[t] = o + 1
        if o < 2 * k:
            axis = o // 2
            sgn = 1 - 2 * (o % 2)
            wmul = 1
            knew = k
        else:
            axis = k
            sgn = 1
            wmul = 2 * (d - k)
            knew = k + 1
        for b in range(d):
            pos[t + 1, b] = pos[t, b]
        pos[t + 1, axis] += sgn
        kk = _site_key(pos, t + 1, d, n)
        key[t + 1] = kk
        Jst[t + 1] = Jst[t] + counts[kk]
        counts[kk] += 1
        kst[t + 1] = knew
        wst[t + 1] = wst[t] * wmul
        opt[t + 1] = 0
        t += 1


@njit(nogil=True, cache=True)
def saw_count_branch(d, n, prefix, weight, axes_used):
    """Weighted number of self-avoiding canonical continuations of ``prefix``."""
    base = 2 * n + 1
    occ = np.zeros(base ** d, dtype=np.uint8)
    pos = np.zeros((n + 1, d), dtype=np.int64)
    key = np.zeros(n + 1, dtype=np.int64)
    kst = np.zeros(n + 1, dtype=np.int64)
    wst = np.zeros(n + 1, dtype=np.int64)
    opt = np.zeros(n + 1, dtype=np.int64)
    p = prefix.size
    key[0] = _site_key(pos, 0, d, n)
    occ[key[0]] = 1
    for t in range(p):
        c = prefix[t]
        for b in range(d):
            pos[t + 1, b] = pos[t, b]
        pos[t + 1, c // 2] += 1 - 2 * (c % 2)
        key[t + 1] = _site_key(pos, t + 1, d, n)
        if occ[key[t + 1]]:
            return 0
        occ[key[t + 1]] = 1
    total = 0
    t = p
    kst[t] = axes_used
    wst[t] = weight
    opt[t] = 0
    while True:
        if t == n:
            total += wst[t]
            occ[key[t]] = 0
            t -= 1
            if t < p:
                break
            continue
        k = kst[t]
        nopts = 2 * k + (1 if k < d else 0)
        o = opt[t]
        if o >= nopts:
            if t == p:
                break
            occ[key[t]] = 0
            t -= 1
            continue
        opt[t] = o + 1
        if o < 2 * k:
            axis = o // 2
            sgn = 1 - 2 * (o % 2)
            wmul = 1
            knew = k
        else:
            axis = k
            sgn = 1
            wmul = 2 * (d - k)
            knew = k + 1
        for b in range(d):
            pos[t + 1, b] = pos[t, b]
        pos[t + 1, axis] += sgn
        kk = _site_key(pos, t + 1, d, n)
        if occ[kk]:
            continue
        occ[kk] = 1
        key[t + 1] = kk
        kst[t + 1] = knew
        wst[t + 1] = wst[t] * wmul
        opt[t + 1] = 0
        t += 1
    return total


# ---------------------------------------------------------------------------
# Metropolis chain for exp(-E(J)) on the full walk space
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def weak_chain(rng, d, n, codes, sweeps, burn_in, move_mix, beta, lo, hi, kappa,
               perms, signs, invperms, thin, snaps, record_states,
               out_r2, out_J, out_hull2, out_state, counters):
    """Run one chain targeting ``exp(-E(J_n))`` with ``E = beta*J + band penalty``.

    A sweep is n attempted moves.  With probability ``move_mix`` a move is a
    pivot (uniform site, uniform non-identity symmetry applied to the suffix),
    otherwise step i is replaced by a uniform random step.  Observables are
    stored once per sweep after ``burn_in``.  ``counters`` receives
    ``[attempts_A, accepts_A, attempts_B, accepts_B, snapshots]``.
    """
    G = perms.shape[0]
    sites = np.zeros((n + 1, d), dtype=np.int64)
    new_sites = np.zeros((n + 1, d), dtype=np.int64)
    new_codes = np.zeros(n, dtype=np.int64)
    _sites_from_codes(codes, d, n, sites)
    cap = _table_capacity(n)
    keys = np.full(cap, EMPTY, dtype=np.int64)
    vals = np.zeros(cap, dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    J = _rebuild_counts(keys, vals, used, sites, d, n)
    E = _energy(J, beta, lo, hi, kappa)
    n_snap = 0
    base_code = 2 * d

    for sweep in range(sweeps):
        for _ in range(n):
            k = 0
            i = 0
            c = 0
            lo_j = 0
            pivot = G > 1 and move_mix > 0.0 and rng.random() < move_mix
            if pivot:
                counters[2] += 1
                k = rng.integers(0, n)
                g = 1 + rng.integers(0, G - 1)
                lo_j = k + 1
                for j in range(lo_j, n + 1):
                    for b in range(d):
                        a = perms[g, b]
                        new_sites[j, b] = sites[k, b] + signs[g, b] * (sites[j, a] - sites[k, a])
                for j in range(k, n):
                    new_codes[j] = _map_code(codes[j], g, signs, invperms)
            else:
                counters[0] += 1
                i = rng.integers(0, n)
                c = rng.integers(0, 2 * d)
                old = codes[i]
                if c == old:
                    counters[1] += 1
                    continue
                a0 = old // 2
                s0 = 1 - 2 * (old % 2)
                a1 = c // 2
                s1 = 1 - 2 * (c % 2)
                lo_j = i + 1
                for j in range(lo_j, n + 1):
                    for b in range(d):
                        new_sites[j, b] = sites[j, b]
                    new_sites[j, a0] -= s0
                    new_sites[j, a1] += s1

            # removing a visit from a site holding c visits lowers J by c - 1
            Jn = J - _add_sites(keys, vals, used, sites, lo_j, d, n, -1) + (n + 1 - lo_j)
            Jn += _add_sites(keys, vals, used, new_sites, lo_j, d, n, 1)
            En = _energy(Jn, beta, lo, hi, kappa)
            dE = En - E
            if dE <= 0.0 or rng.random() < np.exp(-dE):
                for j in range(lo_j, n + 1):
                    for b in range(d):
                        sites[j, b] = new_sites[j, b]
                if pivot:
                    for j in range(k, n):
                        codes[j] = new_codes[j]
                    counters[3] += 1
                else:
                    codes[i] = c
                    counters[1] += 1
                J = Jn
                E = En
            else:
                _add_sites(keys, vals, used, new_sites, lo_j, d, n, -1)
                _add_sites(keys, vals, used, sites, lo_j, d, n, 1)
            if used[0] > cap // 2:
                _rebuild_counts(keys, vals, used, sites, d, n)

        if sweep >= burn_in:
            s = sweep - burn_in
            _record(sites, codes, d, n, s, out_r2, out_hull2)
            out_J[s] = J
            if record_states:
                code = 0
                mult = 1
                for j in range(n):
                    code += codes[j] * mult
                    mult *= base_code
                out_state[s] = code
            if thin > 0 and s % thin == 0 and n_snap < snaps.shape[0]:
                for j in range(n):
                    snaps[n_snap, j] = codes[j]
                n_snap += 1
    counters[4] = n_snap


# ---------------------------------------------------------------------------
# Pivot algorithm on self-avoiding walks
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _rebuild_index(keys, vals, used, sites, d, n):
    keys[:] = EMPTY
    vals[:] = -1
    used[0] = 0
    for j in range(n + 1):
        key = _site_key(sites, j, d, n)
        i = _slot(keys, key)
        if keys[i] == EMPTY:
            keys[i] = key
            used[0] += 1
        vals[i] = j


@njit(nogil=True, cache=True)
def _self_avoiding(sites, d, n):
    ks = np.empty(n + 1, dtype=np.int64)
    for j in range(n + 1):
        ks[j] = _site_key(sites, j, d, n)
    ks.sort()
    for j in range(n):
        if ks[j] == ks[j + 1]:
            return False
    return True


@njit(nogil=True, cache=True)
def saw_chain(rng, d, n, codes, sweeps, burn_in, perms, signs, invperms,
              thin, snaps, debug, out_r2, out_hull2, counters):
    """Pivot algorithm on n-step self-avoiding walks (``codes`` must be a SAW).

    Each attempt picks a pivot site k uniformly in [0, n) and a uniform
    non-identity symmetry; the proposal is rejected at the first new suffix
    site that lands on the fixed prefix.  The site table maps a key to the
    index of the site occupying it (-1 once vacated).  ``counters`` receives
    ``[attempts, accepts, snapshots, debug_violations]``.
    """
    G = perms.shape[0]
    sites = np.zeros((n + 1, d), dtype=np.int64)
    new_sites = np.zeros((n + 1, d), dtype=np.int64)
    _sites_from_codes(codes, d, n, sites)
    cap = _table_capacity(n)
    keys = np.full(cap, EMPTY, dtype=np.int64)
    vals = np.full(cap, -1, dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    _rebuild_index(keys, vals, used, sites, d, n)
    n_snap = 0

    for sweep in range(sweeps):
        for _ in range(n):
            counters[0] += 1
            k = rng.integers(0, n)
            g = 1 + rng.integers(0, G - 1)
            ok = True
            for j in range(k + 1, n + 1):
                for b in range(d):
                    a = perms[g, b]
                    new_sites[j, b] = sites[k, b] + signs[g, b] * (sites[j, a] - sites[k, a])
                i = _slot(keys, _site_key(new_sites, j, d, n))
                if keys[i] != EMPTY and vals[i] >= 0 and vals[i] <= k:
                    ok = False
                    break
            if not ok:
                continue
            for j in range(k + 1, n + 1):
                vals[_slot(keys, _site_key(sites, j, d, n))] = -1
            for j in range(k + 1, n + 1):
                key = _site_key(new_sites, j, d, n)
                i = _slot(keys, key)
                if keys[i] == EMPTY:
                    keys[i] = key
                    used[0] += 1
                vals[i] = j
                for b in range(d):
                    sites[j, b] = new_sites[j, b]
            for j in range(k, n):
                codes[j] = _map_code(codes[j], g, signs, invperms)
            counters[1] += 1
            if used[0] > cap // 2:
                _rebuild_index(keys, vals, used, sites, d, n)
        if debug and not _self_avoiding(sites, d, n):
            counters[3] += 1
        if sweep >= burn_in:
            s = sweep - burn_in
            _record(sites, codes, d, n, s, out_r2, out_hull2)
            if thin > 0 and s % thin == 0 and n_snap < snaps.shape[0]:
                for j in range(n):
                    snaps[n_snap, j] = codes[j]
                n_snap += 1
    counters[2] = n_snap
