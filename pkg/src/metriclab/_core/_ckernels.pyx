# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled metric kernels.

Same arithmetic, same operation order as ``_pykernels``; callers guarantee
``k >= 1`` and a positive ``R`` where one is divided by. Loops release the
GIL so per-topic evaluation can be spread over threads.
"""

from libc.math cimport ldexp, log2

UNJUDGED = -2147483648
cdef int _UNJUDGED = -2147483648

BACKEND = "cython"


cdef inline Py_ssize_t _span(Py_ssize_t k, Py_ssize_t n) noexcept nogil:
    return k if k < n else n


cdef Py_ssize_t _hits(const int[::1] grades, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, n = _span(k, grades.shape[0]), hits = 0
    for i in range(n):
        if grades[i] > 0:
            hits += 1
    return hits


cdef double _dcg(const int[::1] grades, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, n = _span(k, grades.shape[0])
    cdef double total = 0.0
    cdef int g
    for i in range(n):
        g = grades[i]
        if g > 0:
            total += g / log2(<double>(i + 2))
    return total


def relevant_retrieved(const int[::1] grades, Py_ssize_t k):
    cdef Py_ssize_t hits
    with nogil:
        hits = _hits(grades, k)
    return hits


def precision_at(const int[::1] grades, Py_ssize_t k):
    cdef Py_ssize_t hits
    with nogil:
        hits = _hits(grades, k)
    return <double>hits / <double>k


def recall_at(const int[::1] grades, Py_ssize_t k, Py_ssize_t R):
    cdef Py_ssize_t hits
    with nogil:
        hits = _hits(grades, k)
    return <double>hits / <double>R


def average_precision(const int[::1] grades, Py_ssize_t k, Py_ssize_t R):
    cdef Py_ssize_t i, n = _span(k, grades.shape[0]), hits = 0
    cdef double total = 0.0
    with nogil:
        for i in range(n):
            if grades[i] > 0:
                hits += 1
                total += <double>hits / <double>(i + 1)
    return total / <double>R


def reciprocal_rank(const int[::1] grades, Py_ssize_t k):
    cdef Py_ssize_t i, n = _span(k, grades.shape[0]), first = -1
    with nogil:
        for i in range(n):
            if grades[i] > 0:
                first = i
                break
    if first < 0:
        return 0.0
    return 1.0 / <double>(first + 1)


def bpref(const int[::1] grades, Py_ssize_t k, Py_ssize_t R, Py_ssize_t N):
    cdef Py_ssize_t i, n = _span(k, grades.shape[0]), nonrel = 0
    cdef Py_ssize_t denom = R if R < N else N
    cdef double total = 0.0
    cdef int g
    with nogil:
        for i in range(n):
            g = grades[i]
            if g == _UNJUDGED:
                continue
            if g > 0:
                if denom == 0:
                    total += 1.0
                else:
                    total += 1.0 - <double>(nonrel if nonrel < denom else denom) / <double>denom
            else:
                nonrel += 1
    return total / <double>R


def dcg_at(const int[::1] grades, Py_ssize_t k):
    cdef double total
    with nogil:
        total = _dcg(grades, k)
    return total


def ndcg_at(const int[::1] grades, const int[::1] ideal, Py_ssize_t k):
    cdef double num, den
    with nogil:
        num = _dcg(grades, k)
        den = _dcg(ideal, k)
    return num / den


def err_at(const int[::1] grades, Py_ssize_t k, int g_max):
    cdef Py_ssize_t i, n = _span(k, grades.shape[0])
    cdef double scale = ldexp(1.0, g_max)
    cdef double remain = 1.0, total = 0.0, stop
    cdef int g
    with nogil:
        for i in range(n):
            g = grades[i]
            if g > 0:
                stop = (ldexp(1.0, g) - 1.0) / scale
                total += remain * stop / <double>(i + 1)
                remain *= 1.0 - stop
    return total


def rbp(const int[::1] grades, double p, Py_ssize_t depth, int g_max, bint graded):
    cdef Py_ssize_t i, n = _span(depth, grades.shape[0])
    cdef double weight = 1.0, total = 0.0
    cdef int g
    with nogil:
        for i in range(n):
            g = grades[i]
            if g > 0:
                if graded:
                    total += weight * <double>g / <double>g_max
                else:
                    total += weight
            weight *= p
    return (1.0 - p) * total


def inf_ap(const int[::1] grades, Py_ssize_t k, Py_ssize_t R, double eps):
    cdef Py_ssize_t i, n = _span(k, grades.shape[0]), rel = 0, nonrel = 0
    cdef double total = 0.0, frac, rank
    cdef int g
    with nogil:
        for i in range(n):
            g = grades[i]
            if g == _UNJUDGED:
                continue
            if g > 0:
                if i == 0:
                    total += 1.0
                else:
                    rank = <double>(i + 1)
                    frac = (<double>rel + eps) / (<double>(rel + nonrel) + 2.0 * eps)
                    total += (1.0 / rank
                              + ((rank - 1.0) / rank) * (<double>(rel + nonrel) / (rank - 1.0)) * frac)
                rel += 1
            else:
                nonrel += 1
    return total / <double>R
