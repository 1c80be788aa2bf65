"""Independent reference computations used by the tests.

Nothing here imports the solvers under test; each oracle recomputes its answer
from first principles (enumeration, closed forms, grid search).
"""
import itertools
import math

import numpy as np


def alpha(ratio):
    if ratio == 0:
        return math.e
    return (1.0 + ratio) ** (1.0 / ratio)


def enumerate_ip(columns, capacities):
    """Best subset of columns: at most one per user, per-slot load within capacity.

    columns: list of (user_id, price, resources, start, end).
    """
    best, best_set = 0.0, ()
    n = len(columns)
    for k in range(n + 1):
        for subset in itertools.combinations(range(n), k):
            users = [columns[j][0] for j in subset]
            if len(set(users)) != len(users):
                continue
            load = np.zeros(len(capacities))
            for j in subset:
                _, _, q, s, e = columns[j]
                load[s:e + 1] += q
            if np.any(load > np.asarray(capacities) + 1e-9):
                continue
            val = math.fsum(columns[j][1] for j in subset)
            if val > best + 1e-12:
                best, best_set = val, subset
    return best, best_set


def lp_vertices_two_users(q1, b1, q2, b2, cap):
    """Max b1 x1 + b2 x2 s.t. q1 x1 + q2 x2 <= cap, 0 <= x <= 1 by vertex enumeration."""
    cands = [(0, 0), (1, 0), (0, 1), (1, 1)]
    for x1 in (0.0, 1.0):
        x2 = (cap - q1 * x1) / q2
        cands.append((x1, x2))
    for x2 in (0.0, 1.0):
        x1 = (cap - q2 * x2) / q1
        cands.append((x1, x2))
    best = -1.0
    for x1, x2 in cands:
        if -1e-12 <= x1 <= 1 + 1e-12 and -1e-12 <= x2 <= 1 + 1e-12 and q1 * x1 + q2 * x2 <= cap + 1e-12:
            best = max(best, b1 * x1 + b2 * x2)
    return best


def grid_bundle_exists(distance, t_req, delay, tolerance, speeds, rates, step=1.0, horizon=None):
    """Search integer-minute mode times for a witness of the bundle constraints."""
    top = t_req + delay if horizon is None else horizon
    counts = int(math.floor(top / step)) + 1
    for combo in itertools.product(range(counts), repeat=len(speeds)):
        times = [c * step for c in combo]
        total = sum(times)
        if total > t_req + delay + 1e-9 or total < t_req - 1e-9:
            continue
        if abs(sum(v * t for v, t in zip(speeds, times)) - distance) > 1e-9:
            continue
        if sum(s * t for s, t in zip(rates, times)) > tolerance + 1e-9:
            continue
        return True
    return False


def payg_trace(users, available):
    """Hand recomputation of the PAYG dual-price updates for single-bid users.

    users: list of (Q, b) already sorted by unit price; every bundle feasible.
    Returns (q values after each update, accepted indices).
    """
    qbar = [q for q, _ in users]
    r = max(qbar) / available
    a = alpha(r)
    total, k = 0.0, len(users) + 1
    for i, q in enumerate(qbar, start=1):
        total += q
        if total > available:
            k = i
            break
    qs, accepted, q = [], [], 0.0
    for i, (res, b) in enumerate(users[:k - 1]):
        if q > b / res:
            continue
        q = q * (1 + res / available) + b / ((a - 1) * available)
        qs.append(q)
        accepted.append(i)
    return qs, accepted
