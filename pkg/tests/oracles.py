"""Naive loop implementations of the contrastive losses, used only as test oracles."""

import math


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def temporal_term(r, rp, i, t):
    """-log( e^{r_it . r'_it} / sum_t' (e^{r_it . r'_it'} + [t != t'] e^{r_it . r_it'}) )"""
    L = len(r[i])
    num = math.exp(dot(r[i][t], rp[i][t]))
    den = 0.0
    for tp in range(L):
        den += math.exp(dot(r[i][t], rp[i][tp]))
        if tp != t:
            den += math.exp(dot(r[i][t], r[i][tp]))
    return -math.log(num / den)


def instance_term(r, rp, i, t):
    B = len(r)
    num = math.exp(dot(r[i][t], rp[i][t]))
    den = 0.0
    for j in range(B):
        den += math.exp(dot(r[i][t], rp[j][t]))
        if j != i:
            den += math.exp(dot(r[i][t], r[j][t]))
    return -math.log(num / den)


def _mean_terms(term, r, rp):
    B, L = len(r), len(r[0])
    return sum(term(r, rp, i, t) for i in range(B) for t in range(L)) / (B * L)


def temporal(r, rp, symmetric=True):
    a = _mean_terms(temporal_term, r, rp)
    return (a + _mean_terms(temporal_term, rp, r)) / 2 if symmetric else a


def instance(r, rp, symmetric=True):
    a = _mean_terms(instance_term, r, rp)
    return (a + _mean_terms(instance_term, rp, r)) / 2 if symmetric else a


def dual(r, rp, symmetric=True):
    return temporal(r, rp, symmetric) + instance(r, rp, symmetric)


def pool(r):
    """Pairwise max along time; a trailing odd step passes through."""
    out = []
    for series in r:
        L = len(series)
        pooled = []
        for s in range(0, L, 2):
            if s + 1 < L:
                pooled.append([max(a, b) for a, b in zip(series[s], series[s + 1])])
            else:
                pooled.append(list(series[s]))
        out.append(pooled)
    return out


def hierarchical(r, rp, symmetric=True):
    total = dual(r, rp, symmetric)
    d = 1
    while len(r[0]) > 1:
        r, rp = pool(r), pool(rp)
        total += dual(r, rp, symmetric)
        d += 1
    return total / d, d
