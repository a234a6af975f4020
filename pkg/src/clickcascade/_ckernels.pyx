# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Draw order and floating-point evaluation order mirror the Python versions
exactly; the build disables FMA contraction so results are bit-identical.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

BACKEND = "cython"

cdef double _TWO_POW_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(uint64_t* s) nogil:
    cdef uint64_t result = _rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


cdef inline double _uniform(uint64_t* s) nogil:
    return <double>(_next(s) >> 11) * _TWO_POW_M53


cdef inline uint64_t _below(uint64_t* s, uint64_t n) nogil:
    # limit = floor(2^64 / n) * n, computed without 128-bit arithmetic
    cdef uint64_t rem = ((<uint64_t>0) - n) % n      # 2^64 mod n
    cdef uint64_t limit = (<uint64_t>0) - rem          # 2^64 - rem (0 means 2^64)
    cdef uint64_t x
    while True:
        x = _next(s)
        if limit == 0 or x < limit:
            return x % n


def rng_next(uint64_t[::1] state):
    return _next(&state[0])


def rng_uniform(uint64_t[::1] state):
    return _uniform(&state[0])


def rng_below(uint64_t[::1] state, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return _below(&state[0], <uint64_t>n)


def rng_fill_uniform(uint64_t[::1] state, double[::1] out):
    cdef Py_ssize_t i
    cdef uint64_t* s = &state[0]
    for i in range(out.shape[0]):
        out[i] = _uniform(s)


def bernoulli_pairs(const int64_t[::1] block_of, const double[:, ::1] probs,
                    uint64_t[::1] state):
    cdef Py_ssize_t n = block_of.shape[0]
    cdef Py_ssize_t i, j, count = 0, cap = 1024
    cdef uint64_t* s = &state[0]
    cdef cnp.ndarray[int64_t, ndim=1] rows = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] cols = np.empty(cap, dtype=np.int64)
    cdef int64_t bi
    for i in range(n):
        bi = block_of[i]
        for j in range(i + 1, n):
            if _uniform(s) < probs[bi, block_of[j]]:
                if count == cap:
                    cap *= 2
                    rows = np.resize(rows, cap)
                    cols = np.resize(cols, cap)
                rows[count] = i
                cols[count] = j
                count += 1
    return rows[:count].copy(), cols[:count].copy()


def cascade_step(const int64_t[::1] indptr, const int64_t[::1] indices,
                 uint8_t[:, ::1] exposed, uint8_t[:, ::1] pending,
                 uint8_t[:, ::1] clicked, const double[::1] probs, double eta,
                 bint transmit, int64_t[::1] impressions, int64_t[::1] clicks,
                 uint64_t[::1] state):
    cdef Py_ssize_t n = exposed.shape[1]
    cdef Py_ssize_t p, i, j, e, c
    cdef uint64_t* s = &state[0]
    cdef int64_t new_exposures = 0
    cdef double prob
    cdef cnp.ndarray[int64_t, ndim=2] clickers = np.empty((2, n), dtype=np.int64)
    cdef int64_t[:, ::1] cl = clickers
    cdef Py_ssize_t n_clk[2]
    n_clk[0] = 0
    n_clk[1] = 0
    for p in range(2):
        prob = probs[p]
        for i in range(n):
            if pending[p, i]:
                pending[p, i] = 0
                if _uniform(s) < prob:
                    clicked[p, i] = 1
                    clicks[p] += 1
                    cl[p, n_clk[p]] = i
                    n_clk[p] += 1
    if transmit:
        for p in range(2):
            for c in range(n_clk[p]):
                i = cl[p, c]
                for e in range(indptr[i], indptr[i + 1]):
                    j = indices[e]
                    if not exposed[p, j]:
                        if _uniform(s) < eta:
                            exposed[p, j] = 1
                            pending[p, j] = 1
                            impressions[p] += 1
                            new_exposures += 1
    return new_exposures


def gibbs_sweep(const int64_t[::1] doc_ptr, const int64_t[::1] words,
                int64_t[::1] z, int64_t[:, ::1] ndk, int64_t[:, ::1] nkw,
                int64_t[::1] nk, double alpha, double beta, bint update_global,
                uint64_t[::1] state):
    cdef Py_ssize_t n_topics = nk.shape[0]
    cdef double vbeta = nkw.shape[1] * beta
    cdef Py_ssize_t n_docs = doc_ptr.shape[0] - 1
    cdef Py_ssize_t d, t, k
    cdef int64_t w, old, new
    cdef double total, u
    cdef uint64_t* s = &state[0]
    cdef cnp.ndarray[double, ndim=1] weights_arr = np.empty(n_topics, dtype=np.float64)
    cdef double[::1] weights = weights_arr
    for d in range(n_docs):
        for t in range(doc_ptr[d], doc_ptr[d + 1]):
            w = words[t]
            old = z[t]
            ndk[d, old] -= 1
            if update_global:
                nkw[old, w] -= 1
                nk[old] -= 1
            total = 0.0
            for k in range(n_topics):
                total += (ndk[d, k] + alpha) * (nkw[k, w] + beta) / (nk[k] + vbeta)
                weights[k] = total
            u = _uniform(s) * total
            new = n_topics - 1
            for k in range(n_topics):
                if u < weights[k]:
                    new = k
                    break
            z[t] = new
            ndk[d, new] += 1
            if update_global:
                nkw[new, w] += 1
                nk[new] += 1
