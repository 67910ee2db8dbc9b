"""Compiled inner loops for the greedy test allocator.

Per-region reward with Beta(alpha, beta) posterior, n = alpha + beta:

    f(c) = m c + sqrt(h(c)),   m = alpha / n,
    h(c) = s c (c / n + 1),    s = alpha beta / (n (n + 1))

Increments g(c) = f(c + 1) - f(c) are evaluated as
m + (h(c+1) - h(c)) / (sqrt(h(c+1)) + sqrt(h(c))) to avoid cancellation.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def increment(c, m, s, n):
    h0 = s * c * (c / n + 1.0)
    h1 = s * (c + 1.0) * ((c + 1.0) / n + 1.0)
    return m + s * (1.0 + (2.0 * c + 1.0) / n) / (np.sqrt(h1) + np.sqrt(h0))


@njit(cache=True)
def _before(v, i, w, j):
    # heap order: larger increment first, lower region index on ties
    return v > w or (v == w and i < j)


@njit(cache=True)
def _sift_down(hv, hk, i, size):
    while True:
        left = 2 * i + 1
        right = left + 1
        best = i
        if left < size and _before(hv[left], hk[left], hv[best], hk[best]):
            best = left
        if right < size and _before(hv[right], hk[right], hv[best], hk[best]):
            best = right
        if best == i:
            return
        hv[i], hv[best] = hv[best], hv[i]
        hk[i], hk[best] = hk[best], hk[i]
        i = best


@njit(cache=True)
def _shape(alpha, beta):
    n = alpha + beta
    m = alpha / n
    s = alpha * beta / (n * (n + 1.0))
    return m, s, n


@njit(cache=True)
def heap_fill(counts, m, s, n, units):
    """Hand out ``units`` more tests one at a time, starting from ``counts``."""
    K = counts.shape[0]
    hv = np.empty(K)
    hk = np.empty(K, np.int64)
    for k in range(K):
        hv[k] = increment(float(counts[k]), m[k], s[k], n[k])
        hk[k] = k
    for i in range(K // 2 - 1, -1, -1):
        _sift_down(hv, hk, i, K)
    for _ in range(units):
        k = hk[0]
        counts[k] += 1
        hv[0] = increment(float(counts[k]), m[k], s[k], n[k])
        _sift_down(hv, hk, 0, K)
    return counts


@njit(cache=True)
def greedy_heap(alpha, beta, budget):
    """Unit-by-unit greedy allocation (reference algorithm)."""
    m, s, n = _shape(alpha, beta)
    counts = np.zeros(alpha.shape[0], np.int64)
    return heap_fill(counts, m, s, n, budget)


@njit(cache=True)
def _continuous_count(lam, m, s, n, cap):
    # real x solving f'(x) = lam; g(c) ~ f'(c + 1/2), so about round(x) entries exceed lam
    d = lam - m
    asym = s / n
    if d <= 0.0 or d * d <= asym:
        return float(cap)
    x = 0.5 * (-n + np.sqrt(n * n + n * s / (d * d - asym)))
    if x > cap:
        return float(cap)
    return x


@njit(cache=True)
def _first_at_or_below(lam, m, s, n, lo, hi):
    # first c in [lo, hi) with increment(c) <= lam, or hi
    while lo < hi:
        mid = (lo + hi) // 2
        if increment(float(mid), m, s, n) > lam:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _exact_count(lam, m, s, n, cap):
    # number of c in [0, cap) with increment(c) > lam, rows being non-increasing
    c = int(_continuous_count(lam, m, s, n, cap) + 0.5)
    if c > cap:
        c = cap
    if c < cap and increment(float(c), m, s, n) > lam:
        lo = c + 1
        step = 1
        probe = lo
        while probe < cap and increment(float(probe), m, s, n) > lam:
            lo = probe + 1
            step *= 2
            probe = lo + step - 1
        return _first_at_or_below(lam, m, s, n, lo, min(probe, cap))
    if c > 0 and increment(float(c - 1), m, s, n) <= lam:
        hi = c - 1
        step = 1
        probe = hi - step
        while probe >= 0 and increment(float(probe), m, s, n) <= lam:
            hi = probe
            step *= 2
            probe = hi - step
        return _first_at_or_below(lam, m, s, n, max(probe + 1, 0), hi)
    return c


@njit(cache=True)
def greedy_fast(alpha, beta, budget):
    """Same allocation as :func:`greedy_heap`, warm-started.

    Every entry of the increment table above a level ``lam`` is taken by the
    greedy before any entry at or below it. So if the entries above ``lam``
    number at most ``budget``, granting them up front and finishing with the
    heap reproduces the unit-by-unit result exactly. ``lam`` is located from
    the closed-form root of the continuous marginal reward.
    """
    K = alpha.shape[0]
    m, s, n = _shape(alpha, beta)
    top = -np.inf
    bottom = np.inf
    for k in range(K):
        g0 = increment(0.0, m[k], s[k], n[k])
        if g0 > top:
            top = g0
        if m[k] < bottom:
            bottom = m[k]
    lo = bottom
    hi = top
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        total = 0.0
        for k in range(K):
            total += _continuous_count(mid, m[k], s[k], n[k], budget)
        if total > budget:
            lo = mid
        else:
            hi = mid
    counts = np.zeros(K, np.int64)
    used = _exact_counts(hi, m, s, n, budget, counts)
    if used > budget + 4 * K:
        lo = hi
        hi = top
        while hi - lo > 0.0:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            used = _exact_counts(mid, m, s, n, budget, counts)
            if used > budget + 4 * K:
                lo = mid
            elif used < budget:
                hi = mid
            else:
                break
        if used < budget or used > budget + 4 * K:
            used = _exact_counts(hi, m, s, n, budget, counts)
    if used <= budget:
        return heap_fill(counts, m, s, n, budget - used)
    # too many entries above the level: drop the smallest taken ones, which
    # under the greedy's order (value, then lower index first) means the
    # smallest row tail with ties going to the highest index
    for _ in range(used - budget):
        drop = -1
        low = np.inf
        for k in range(K):
            if counts[k] > 0:
                v = increment(float(counts[k] - 1), m[k], s[k], n[k])
                if v <= low:
                    low = v
                    drop = k
        counts[drop] -= 1
    return counts


@njit(cache=True)
def _exact_counts(lam, m, s, n, budget, counts):
    used = 0
    for k in range(m.shape[0]):
        counts[k] = _exact_count(lam, m[k], s[k], n[k], budget)
        used += counts[k]
    return used
