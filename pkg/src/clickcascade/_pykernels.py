"""Pure-Python implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same sequence of random draws, so both backends produce identical
output for identical inputs. The RNG state is a length-4 ``uint64`` array
(xoshiro256**) that is read on entry and written back on exit.
"""

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
_TWO_POW_M53 = 1.0 / 9007199254740992.0

BACKEND = "python"


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class _State:
    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, arr):
        self.s0, self.s1, self.s2, self.s3 = (int(v) for v in arr)

    def store(self, arr):
        arr[0] = self.s0
        arr[1] = self.s1
        arr[2] = self.s2
        arr[3] = self.s3

    def next(self):
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def uniform(self):
        return (self.next() >> 11) * _TWO_POW_M53

    def below(self, n):
        limit = ((MASK64 + 1) // n) * n
        while True:
            x = self.next()
            if x < limit:
                return x % n


def rng_next(state):
    st = _State(state)
    x = st.next()
    st.store(state)
    return x


def rng_uniform(state):
    st = _State(state)
    u = st.uniform()
    st.store(state)
    return u


def rng_below(state, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    st = _State(state)
    x = st.below(n)
    st.store(state)
    return x


def rng_fill_uniform(state, out):
    st = _State(state)
    for i in range(out.shape[0]):
        out[i] = st.uniform()
    st.store(state)


def bernoulli_pairs(block_of, probs, state):
    """Sample each unordered pair i<j with probability probs[block_of[i], block_of[j]].

    Returns two int64 arrays (rows, cols) with rows < cols, in lexicographic order.
    """
    st = _State(state)
    n = len(block_of)
    blocks = [int(b) for b in block_of]
    p = probs.tolist()
    rows = []
    cols = []
    for i in range(n):
        pi = p[blocks[i]]
        for j in range(i + 1, n):
            if st.uniform() < pi[blocks[j]]:
                rows.append(i)
                cols.append(j)
    st.store(state)
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def cascade_step(indptr, indices, exposed, pending, clicked, probs, eta, transmit,
                 impressions, clicks, state):
    """One synchronous cascade step for two packages on a CSR graph.

    Phase 1: every pending (newly exposed) agent draws its single click for
    that package. Phase 2 (if ``transmit``): each agent that clicked in phase 1
    passes the package to every not-yet-exposed neighbour with probability
    ``eta``. Returns the number of new exposures created in phase 2.
    """
    st = _State(state)
    ptr = indptr.tolist()
    nbr = indices.tolist()
    new_exposures = 0
    for p in range(2):
        prob = float(probs[p])
        pend = pending[p]
        clickers = []
        for i in np.flatnonzero(pend).tolist():
            if st.uniform() < prob:
                clickers.append(i)
        pend[:] = 0
        if clickers:
            clicked[p, clickers] = 1
            clicks[p] += len(clickers)
        if p == 0:
            first = clickers
        else:
            second = clickers
    if transmit:
        for p, clickers in ((0, first), (1, second)):
            exp = exposed[p].tolist()
            fresh = []
            for i in clickers:
                for e in range(ptr[i], ptr[i + 1]):
                    j = nbr[e]
                    if not exp[j]:
                        if st.uniform() < eta:
                            exp[j] = 1
                            fresh.append(j)
            if fresh:
                exposed[p, fresh] = 1
                pending[p, fresh] = 1
                impressions[p] += len(fresh)
                new_exposures += len(fresh)
    st.store(state)
    return new_exposures


def gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, alpha, beta, update_global, state):
    """One collapsed Gibbs sweep over every token.

    With ``update_global`` false the topic-word counts ``nkw``/``nk`` are
    treated as frozen (held-out inference); only ``ndk`` and ``z`` change.
    """
    st = _State(state)
    n_topics = nk.shape[0]
    vbeta = nkw.shape[1] * beta
    n_docs = doc_ptr.shape[0] - 1
    ptr = doc_ptr.tolist()
    wl = words.tolist()
    zl = z.tolist()
    dk = ndk.tolist()
    kw = nkw.tolist()
    kt = nk.tolist()
    topics = range(n_topics)
    weights = [0.0] * n_topics
    for d in range(n_docs):
        row = dk[d]
        for t in range(ptr[d], ptr[d + 1]):
            w = wl[t]
            old = zl[t]
            row[old] -= 1
            if update_global:
                kw[old][w] -= 1
                kt[old] -= 1
            total = 0.0
            for k in topics:
                total += (row[k] + alpha) * (kw[k][w] + beta) / (kt[k] + vbeta)
                weights[k] = total
            u = st.uniform() * total
            new = n_topics - 1
            for k in topics:
                if u < weights[k]:
                    new = k
                    break
            zl[t] = new
            row[new] += 1
            if update_global:
                kw[new][w] += 1
                kt[new] += 1
    z[:] = zl
    ndk[:] = dk
    if update_global:
        nkw[:] = kw
        nk[:] = kt
    st.store(state)
