"""Pure-Python metric kernels.

Mirrors ``_ckernels.pyx`` operation for operation so that both backends
return bit-identical doubles. Every loop accumulates in ascending rank
order. ``grades`` is any integer sequence (normally ``array('i')``) where
``UNJUDGED`` marks a document with no judgment.
"""

from math import ldexp, log2

UNJUDGED = -2147483648

BACKEND = "python"


def relevant_retrieved(grades, k):
    n = min(k, len(grades))
    hits = 0
    for i in range(n):
        if grades[i] > 0:
            hits += 1
    return hits


def precision_at(grades, k):
    return relevant_retrieved(grades, k) / k


def recall_at(grades, k, R):
    return relevant_retrieved(grades, k) / R


def average_precision(grades, k, R):
    n = min(k, len(grades))
    hits = 0
    total = 0.0
    for i in range(n):
        if grades[i] > 0:
            hits += 1
            total += hits / (i + 1)
    return total / R


def reciprocal_rank(grades, k):
    n = min(k, len(grades))
    for i in range(n):
        if grades[i] > 0:
            return 1.0 / (i + 1)
    return 0.0


def bpref(grades, k, R, N):
    n = min(k, len(grades))
    denom = min(R, N)
    nonrel = 0
    total = 0.0
    for i in range(n):
        g = grades[i]
        if g == UNJUDGED:
            continue
        if g > 0:
            if denom == 0:
                total += 1.0
            else:
                total += 1.0 - min(nonrel, denom) / denom
        else:
            nonrel += 1
    return total / R


def dcg_at(grades, k):
    n = min(k, len(grades))
    total = 0.0
    for i in range(n):
        g = grades[i]
        if g > 0:
            total += g / log2(i + 2)
    return total


def ndcg_at(grades, ideal, k):
    return dcg_at(grades, k) / dcg_at(ideal, k)


def err_at(grades, k, g_max):
    n = min(k, len(grades))
    scale = ldexp(1.0, g_max)
    remain = 1.0
    total = 0.0
    for i in range(n):
        g = grades[i]
        if g > 0:
            stop = (ldexp(1.0, g) - 1.0) / scale
            total += remain * stop / (i + 1)
            remain *= 1.0 - stop
    return total


def rbp(grades, p, depth, g_max, graded):
    n = min(depth, len(grades))
    weight = 1.0
    total = 0.0
    for i in range(n):
        g = grades[i]
        if g > 0:
            if graded:
                total += weight * g / g_max
            else:
                total += weight
        weight *= p
    return (1.0 - p) * total


def inf_ap(grades, k, R, eps):
    n = min(k, len(grades))
    rel = 0
    nonrel = 0
    total = 0.0
    for i in range(n):
        g = grades[i]
        if g == UNJUDGED:
            continue
        if g > 0:
            if i == 0:
                total += 1.0
            else:
                rank = i + 1
                frac = (rel + eps) / (rel + nonrel + 2.0 * eps)
                total += 1.0 / rank + ((rank - 1) / rank) * ((rel + nonrel) / (rank - 1)) * frac
            rel += 1
        else:
            nonrel += 1
    return total / R
