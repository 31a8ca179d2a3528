"""Slope fits, limit estimation and an ordered thread map."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

GROWTH_FACTOR = 1.5


def fit_slope(x, y, min_samples=4, min_decades=2.0):
    """Least-squares slope of log|y| against log x.

    Requires at least ``min_samples`` points spanning ``min_decades`` decades
    of x; zero values of y are rejected since their logarithm is undefined.
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if len(x) < min_samples:
        raise ValueError(f"slope fit needs at least {min_samples} samples, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("slope fit needs positive abscissae and nonzero values")
    span = math.log10(x.max() / x.min())
    if span < min_decades - 1e-12:
        raise ValueError(f"samples span {span:.2f} decades, need {min_decades}")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def try_fit_slope(x, y, **kw):
    """fit_slope, or None when the samples do not qualify."""
    try:
        return fit_slope(x, y, **kw)
    except ValueError:
        return None


def estimate_limit(values, factor=GROWTH_FACTOR, zero_tol=1e-300):
    """Classify a sequence sampled at decreasing r and estimate its limit.

    Returns ``(limit, status)`` with status ``"converged"``, ``"divergent"``
    or ``"inconclusive"``.  Convergence: the last successive difference is at
    least ``factor`` times smaller than the one before; the limit adds the
    geometric tail.  Divergence: |v| grows by ``factor`` at two consecutive
    steps (three consecutive samples).
    """
    v = np.asarray(values, dtype=float)
    if np.all(np.abs(v) <= zero_tol):
        return 0.0, "converged"
    for i in range(len(v) - 2):
        a, b, c = np.abs(v[i:i + 3])
        if a > 0 and b >= factor * a and c >= factor * b:
            return None, "divergent"
    if len(v) < 3:
        return None, "inconclusive"
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d2 == 0:
        return float(v[-1]), "converged"
    if abs(d2) * factor <= abs(d1):
        q = d2 / d1
        return float(v[-1] + d2 * q / (1.0 - q)), "converged"
    return None, "inconclusive"


def worker_count():
    try:
        n = int(os.environ.get("HELMSENSE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def ordered_map(fn, items):
    """map(fn, items) using up to HELMSENSE_THREADS workers; results keep input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def estimate_limit_parts(parts, factor=GROWTH_FACTOR):
    """Limit of a sum of sequences: the sum itself first, then part by part.

    A sum of sequences converging at different rates can look inconclusive
    although every part converges; then the part limits are added.
    """
    parts = [np.asarray(p, dtype=float) for p in parts]
    total = np.sum(parts, axis=0)
    limit, status = estimate_limit(total, factor)
    if status != "inconclusive":
        return limit, status
    results = [estimate_limit(p, factor) for p in parts]
    if any(st == "divergent" for _, st in results):
        return None, "divergent"
    if all(st == "converged" for _, st in results):
        return float(sum(l for l, _ in results)), "converged"
    return None, "inconclusive"
