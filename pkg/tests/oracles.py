"""Independent brute-force implementations used as test oracles.

Everything here recomputes results by exhaustive enumeration and exact
rational arithmetic, deliberately avoiding the library's own code paths:
quantiles enumerate candidate thresholds and count, risk thresholds check
every candidate by recounting misses, and the review metrics are plain
counting loops. Keep this module free of imports from the package internals
beyond plain data access.
"""

from __future__ import annotations

import math
from fractions import Fraction


def oracle_quantile(scores, alpha):
    """Smallest threshold covering at least (n+1)(1-alpha) scores, else +inf.

    The level is evaluated in exact rational arithmetic over the float alpha.
    """
    n = len(scores)
    need = Fraction(n + 1) * (1 - Fraction(alpha))
    for t in sorted(scores):
        if sum(1 for s in scores if s <= t) >= need:
            return t
    return math.inf


def oracle_lac_set(q_hat, prob_by_label):
    return frozenset(y for y, p in prob_by_label.items() if p >= 1.0 - q_hat)


def oracle_cclac_quantiles(cal, alpha):
    """cal: list of (prob_by_label dict, true label)."""
    labels = {y for _, y in cal}
    return {
        y: oracle_quantile([1.0 - probs[y] for probs, t in cal if t == y], alpha)
        for y in labels
    }


def oracle_cclac_set(q_by_label, prob_by_label):
    return frozenset(
        y for y, p in prob_by_label.items() if 1.0 - p <= q_by_label.get(y, -1.0)
    )


def oracle_crc_lambda(cal, alpha):
    """cal: list of (prob_by_label dict, true label). None when infeasible.

    Feasibility of a candidate threshold is (misses + 1)/(n + 1) <= alpha in
    exact arithmetic; the answer is the largest feasible candidate.
    """
    n = len(cal)
    candidates = {0.0, 1.0}
    for probs, _ in cal:
        candidates.update(probs.values())
    feasible = []
    for lam in candidates:
        misses = sum(1 for probs, y in cal if probs[y] < lam)
        if Fraction(misses + 1, n + 1) <= Fraction(alpha):
            feasible.append(lam)
    return max(feasible) if feasible else None


def oracle_crc_set(lam, prob_by_label):
    return frozenset(y for y, p in prob_by_label.items() if p >= lam)


def clip01(v):
    return min(max(v, 0.0), 1.0)


def oracle_ar_interval(d_hat, q_hat):
    return (clip01(d_hat - q_hat), clip01(d_hat + q_hat))


def oracle_gamma_interval(d_hat, q_hat, epsilon=1e-6):
    if math.isinf(q_hat):
        return (0.0, 1.0)
    scale = max(d_hat, epsilon)
    return (clip01(d_hat - q_hat * scale), clip01(d_hat + q_hat * scale))


def oracle_knn_sigma(features, residuals, k, x, exclude=None):
    """Brute-force nearest neighbors: sort by (distance, index), average k."""
    dists = []
    for i, f in enumerate(features):
        if i == exclude:
            continue
        d2 = 0.0
        for a, b in zip(f, x):
            d2 += (a - b) ** 2
        dists.append((math.sqrt(d2), i))
    dists.sort()
    chosen = [residuals[i] for _, i in dists[: min(k, len(dists))]]
    return sum(chosen) / len(chosen)


def oracle_interp(centers, probs, d):
    if d <= centers[0]:
        return probs[0]
    if d >= centers[-1]:
        return probs[-1]
    for i in range(len(centers) - 1):
        lo, hi = centers[i], centers[i + 1]
        if lo <= d <= hi:
            if d == lo:
                return probs[i]
            if d == hi:
                return probs[i + 1]
            slope = (probs[i + 1] - probs[i]) / (hi - lo)
            return slope * (d - lo) + probs[i]
    raise AssertionError("unreachable")


def oracle_r2ccp_quantile(scores, alpha):
    """k-th smallest with k = max(1, floor((n+1) alpha)) in exact arithmetic."""
    n = len(scores)
    k = max(1, math.floor(Fraction(n + 1) * Fraction(alpha)))
    return sorted(scores)[min(k, n) - 1]


def oracle_r2ccp_interval(centers, probs, q_hat):
    keep = [c for c, p in zip(centers, probs) if p >= q_hat]
    if not keep:
        best = max(range(len(probs)), key=lambda i: (probs[i], -i))
        return (centers[best], centers[best])
    return (min(keep), max(keep))


# -- metric recounts -------------------------------------------------------


def oracle_mure(records):
    tp = fp = 0
    for r in records:
        if len(r.set.members) != 1:
            if r.y != r.y_hat:
                tp += 1
            else:
                fp += 1
    if tp + fp == 0:
        return None
    return tp / (tp + fp)


def oracle_care(records, gamma):
    tp = fn = 0
    for r in records:
        if r.d >= gamma:
            if r.interval.hi >= gamma:
                tp += 1
            else:
                fn += 1
    if tp + fn == 0:
        return None
    return tp / (tp + fn)


def oracle_coverage(records):
    return sum(1 for r in records if r.y in r.set.members) / len(records)


def oracle_icp(records):
    return sum(1 for r in records if r.interval.lo <= r.d <= r.interval.hi) / len(records)


def oracle_fpr_at_tpr(records, target_tpr, gamma):
    """Exhaustive sweep over every distinct upper bound plus zero."""
    positives = [r for r in records if r.d >= gamma]
    negatives = [r for r in records if r.d < gamma]
    if not positives:
        return None
    best = None
    for t in {r.interval.hi for r in records} | {0.0}:
        tpr = sum(1 for r in positives if r.interval.hi >= t) / len(positives)
        if tpr >= target_tpr and (best is None or t > best):
            best = t
    if best is None:
        return None
    if negatives:
        fpr = sum(1 for r in negatives if r.interval.hi >= best) / len(negatives)
    else:
        fpr = 0.0
    return best, fpr


def oracle_point_biserial_cov(flags, d_values):
    """Covariance form: cov(flag, d) / (sigma_flag * sigma_d), population."""
    n = len(flags)
    mean_f = sum(flags) / n
    mean_d = sum(d_values) / n
    cov = sum((f - mean_f) * (d - mean_d) for f, d in zip(flags, d_values)) / n
    var_f = sum((f - mean_f) ** 2 for f in flags) / n
    var_d = sum((d - mean_d) ** 2 for d in d_values) / n
    if var_f == 0.0 or var_d == 0.0:
        return None
    return cov / math.sqrt(var_f * var_d)
