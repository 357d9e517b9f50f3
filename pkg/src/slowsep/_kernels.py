"""Numba kernels for the event-driven simulator.

Everything here operates on flat arrays so the whole event loop stays in
machine code. The random stream is xoshiro256++ seeded from SeedSequence
words (one independent stream per trajectory), waiting times are sampled
from the summed bond rates held in a Fenwick tree, and per-site occupation
time integrals are maintained exactly via last-touch accounting.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _rotl(x, k):
    return (x << U64(k)) | (x >> U64(64 - k))


@njit(inline="always")
def _xoshiro_next(s):
    out = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return out


@njit(inline="always")
def _u01(s):
    """Uniform double in [0, 1) from the top 53 bits."""
    return (_xoshiro_next(s) >> U64(11)) * _INV53


# ---------------------------------------------------------------------------
# Fenwick tree over bond rates (1-based internal indexing)
# ---------------------------------------------------------------------------

@njit(inline="always")
def fenwick_add(tree, i, delta):
    j = i + 1
    size = tree.shape[0]
    while j < size:
        tree[j] += delta
        j += j & (-j)


@njit
def fenwick_build(tree, leaves):
    tree[:] = 0.0
    for i in range(leaves.shape[0]):
        fenwick_add(tree, i, leaves[i])


@njit(inline="always")
def fenwick_find(tree, nleaves, target):
    """Smallest leaf index i with prefix(i+1) > target (proportional pick)."""
    pos = 0
    step = 1
    while step * 2 <= nleaves:
        step *= 2
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= nleaves and tree[nxt] <= rem:
            rem -= tree[nxt]
            pos = nxt
        step //= 2
    if pos >= nleaves:
        pos = nleaves - 1
    return pos


@njit
def fenwick_prefix_total(tree, nleaves):
    total = 0.0
    j = nleaves
    while j > 0:
        total += tree[j]
        j -= j & (-j)
    return total


# ---------------------------------------------------------------------------
# Event loop
# ---------------------------------------------------------------------------

@njit(inline="always")
def _boundary_leaf(occ_bit, res_density, damp):
    if occ_bit == 0:
        return damp * res_density
    return damp * (1.0 - res_density)


@njit
def _init_leaves(occ, alpha, beta, damp, leaves):
    m = occ.shape[0]
    nb = m + 1
    leaves[0] = _boundary_leaf(occ[0], alpha, damp)
    for b in range(1, nb - 1):
        leaves[b] = 1.0 if occ[b - 1] != occ[b] else 0.0
    leaves[nb - 1] = _boundary_leaf(occ[m - 1], beta, damp)


@njit(inline="always")
def _touch(acc, last, occ, site, now):
    if occ[site] == 1:
        acc[site] += now - last[site]
    last[site] = now


@njit
def _sim_core(occ, theta, alpha, beta, n, T, grid, s,
              snaps, site_int, rebuild_every,
              log_times, log_bonds, want_log):
    """Run one trajectory over [0, T], emitting grid-time statistics.

    occ is mutated in place. Returns (events, boundary_events, log_len);
    log_len is -1 when the event log overflowed its capacity.
    """
    m = occ.shape[0]
    nb = m + 1
    damp = float(n) ** (-theta)
    speed = float(n) * float(n)

    leaves = np.empty(nb)
    _init_leaves(occ, alpha, beta, damp, leaves)
    tree = np.zeros(nb + 1)
    fenwick_build(tree, leaves)
    total = fenwick_prefix_total(tree, nb)

    acc = np.zeros(m)
    last = np.zeros(m)

    G = grid.shape[0]
    g = 0
    t = 0.0
    events = 0
    boundary_events = 0
    log_len = 0
    log_cap = log_times.shape[0]

    while True:
        dt = -np.log1p(-_u01(s)) / (speed * total)
        t_next = t + dt

        while g < G and grid[g] < t_next:
            tg = grid[g]
            for x in range(m):
                snaps[g, x] = occ[x]
                extra = tg - last[x] if occ[x] == 1 else 0.0
                site_int[g, x] = acc[x] + extra
            g += 1

        if t_next > T:
            break

        r = _u01(s) * total
        b = fenwick_find(tree, nb, r)
        if leaves[b] <= 0.0:
            # roundoff landed on an inactive leaf; advance time, change nothing
            t = t_next
            continue
        t = t_next

        if b == 0:
            _touch(acc, last, occ, 0, t)
            occ[0] ^= 1
            new = _boundary_leaf(occ[0], alpha, damp)
            fenwick_add(tree, 0, new - leaves[0])
            total += new - leaves[0]
            leaves[0] = new
            if nb > 2:
                new = 1.0 if occ[0] != occ[1] else 0.0
            else:
                # n = 2: the right reservoir bond reads the same site
                new = _boundary_leaf(occ[m - 1], beta, damp)
            fenwick_add(tree, 1, new - leaves[1])
            total += new - leaves[1]
            leaves[1] = new
            boundary_events += 1
        elif b == nb - 1:
            _touch(acc, last, occ, m - 1, t)
            occ[m - 1] ^= 1
            new = _boundary_leaf(occ[m - 1], beta, damp)
            fenwick_add(tree, b, new - leaves[b])
            total += new - leaves[b]
            leaves[b] = new
            if nb > 2:
                new = 1.0 if occ[m - 2] != occ[m - 1] else 0.0
            else:
                new = _boundary_leaf(occ[0], alpha, damp)
            fenwick_add(tree, b - 1, new - leaves[b - 1])
            total += new - leaves[b - 1]
            leaves[b - 1] = new
            boundary_events += 1
        else:
            i = b - 1
            j = b
            _touch(acc, last, occ, i, t)
            _touch(acc, last, occ, j, t)
            tmp = occ[i]
            occ[i] = occ[j]
            occ[j] = tmp
            # bond b stays active; only the two neighbours can change
            if b - 1 == 0:
                new = _boundary_leaf(occ[0], alpha, damp)
            else:
                new = 1.0 if occ[b - 2] != occ[b - 1] else 0.0
            fenwick_add(tree, b - 1, new - leaves[b - 1])
            total += new - leaves[b - 1]
            leaves[b - 1] = new
            if b + 1 == nb - 1:
                new = _boundary_leaf(occ[m - 1], beta, damp)
            else:
                new = 1.0 if occ[b] != occ[b + 1] else 0.0
            fenwick_add(tree, b + 1, new - leaves[b + 1])
            total += new - leaves[b + 1]
            leaves[b + 1] = new

        events += 1
        if want_log:
            if log_len < log_cap:
                log_times[log_len] = t
                log_bonds[log_len] = b
                log_len += 1
            else:
                log_len = -1
                want_log = False

        if events % rebuild_every == 0:
            _init_leaves(occ, alpha, beta, damp, leaves)
            fenwick_build(tree, leaves)
            total = fenwick_prefix_total(tree, nb)

    return events, boundary_events, log_len


@njit
def _draw_init(mode, fixed, probs, rho, m, s):
    occ = np.empty(m, dtype=np.uint8)
    if mode == 0:
        for x in range(m):
            occ[x] = fixed[x]
    elif mode == 1:
        for x in range(m):
            occ[x] = 1 if _u01(s) < rho else 0
    else:
        for x in range(m):
            occ[x] = 1 if _u01(s) < probs[x] else 0
    return occ


@njit(parallel=True)
def _run_ensemble(n, theta, alpha, beta, T, grid, seeds,
                  init_mode, init_fixed, init_probs, init_rho,
                  snaps, site_int, counts, rebuild_every):
    R = seeds.shape[0]
    m = n - 1
    empty_t = np.empty(0)
    empty_b = np.empty(0, dtype=np.int32)
    for r in prange(R):
        s = seeds[r].copy()
        if s[0] == 0 and s[1] == 0 and s[2] == 0 and s[3] == 0:
            s[0] = U64(1)
        occ = _draw_init(init_mode, init_fixed, init_probs, init_rho, m, s)
        ev, bev, _ = _sim_core(occ, theta, alpha, beta, n, T, grid, s,
                               snaps[r], site_int[r], rebuild_every,
                               empty_t, empty_b, False)
        counts[r, 0] = ev
        counts[r, 1] = bev
