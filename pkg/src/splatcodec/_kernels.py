"""Numba kernels for the entropy-coder inner loops.

Everything here operates on plain int64 arithmetic and preallocated numpy
buffers so the per-symbol cost stays in the nanosecond range; the wrappers
in rangecoder.py own validation, buffer sizing, and error mapping.

Coder state: 32-bit low/range with byte-wise renormalization. A carry out of
the 32-bit window propagates directly into the already-emitted buffer bytes
(trailing 0xFF bytes wrap to 0x00); the carry can never run off the front of
the buffer because the coded value always stays below the initial interval's
upper bound. Renormalization keeps range >= 2**24, so with frequency totals
capped at 2**16 the truncation loss per symbol is below 0.006 bits.
"""

import numpy as np
from numba import njit

RC_TOP = 1 << 24
RC_MASK = 0xFFFFFFFF
STATIC_TOTAL_BITS = 16  # static PMFs always sum to 2**16
ADAPTIVE_SYMBOLS = 256
ADAPTIVE_HALVE_AT = 1 << 15


@njit(cache=True, nogil=True)
def _carry(out, pos):
    j = pos - 1
    while out[j] == 0xFF:
        out[j] = 0
        j -= 1
    out[j] += 1


@njit(cache=True, nogil=True)
def rc_encode(indices, cum, out):
    """Range-encode indices against cumulative freqs (cum[L] == 2**16).

    Returns the number of bytes written into ``out``.
    """
    low = np.int64(0)
    rng = np.int64(RC_MASK)
    pos = 0
    for i in range(indices.size):
        s = indices[i]
        r = rng >> STATIC_TOTAL_BITS
        low += r * cum[s]
        if low > RC_MASK:
            _carry(out, pos)
            low &= RC_MASK
        rng = r * (cum[s + 1] - cum[s])
        while rng < RC_TOP:
            out[pos] = (low >> 24) & 0xFF
            pos += 1
            low = (low << 8) & RC_MASK
            rng <<= 8
    for _ in range(4):
        out[pos] = (low >> 24) & 0xFF
        pos += 1
        low = (low << 8) & RC_MASK
    return pos


@njit(cache=True, nogil=True)
def rc_decode(data, cum, lut, n, out):
    """Inverse of rc_encode; fills ``out`` with n indices.

    Returns 0 on success, 1 if the payload ran out of bytes. The symbol
    search goes through ``lut`` (value -> symbol, length 2**16), so decoded
    indices always land inside the alphabet even for mismatched payloads.
    """
    if data.size < 4:
        return 1
    low = np.int64(0)
    rng = np.int64(RC_MASK)
    code = np.int64(0)
    for pos in range(4):
        code = (code << 8) | data[pos]
    pos = 4
    for i in range(n):
        r = rng >> STATIC_TOTAL_BITS
        val = ((code - low) & RC_MASK) // r
        if val > 0xFFFF:
            val = 0xFFFF
        s = lut[val]
        low = (low + r * cum[s]) & RC_MASK
        rng = r * (cum[s + 1] - cum[s])
        while rng < RC_TOP:
            if pos >= data.size:
                return 1
            code = ((code << 8) | data[pos]) & RC_MASK
            pos += 1
            low = (low << 8) & RC_MASK
            rng <<= 8
        out[i] = s
    return 0


@njit(cache=True, nogil=True)
def _fenwick_rebuild(freq, tree):
    for i in range(tree.size):
        tree[i] = 0
    for s in range(freq.size):
        i = s + 1
        while i <= freq.size:
            tree[i] += freq[s]
            i += i & (-i)


@njit(cache=True, nogil=True)
def _fenwick_prefix(tree, s):
    # sum of freq[0..s-1]
    total = np.int64(0)
    i = s
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@njit(cache=True, nogil=True)
def _fenwick_add(tree, s, delta):
    i = s + 1
    while i <= tree.size - 1:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _adaptive_halve(freq, tree):
    total = np.int64(0)
    for s in range(freq.size):
        freq[s] = (freq[s] + 1) >> 1
        total += freq[s]
    _fenwick_rebuild(freq, tree)
    return total


@njit(cache=True, nogil=True)
def ab_encode(data, out):
    """Adaptive order-0 byte coder: counts start at 1, +1 per symbol,
    all counts halved (keeping >= 1) when the total reaches 2**15.

    Returns bytes written into ``out``.
    """
    freq = np.ones(ADAPTIVE_SYMBOLS, dtype=np.int64)
    tree = np.zeros(ADAPTIVE_SYMBOLS + 1, dtype=np.int64)
    _fenwick_rebuild(freq, tree)
    total = np.int64(ADAPTIVE_SYMBOLS)

    low = np.int64(0)
    rng = np.int64(RC_MASK)
    pos = 0
    for i in range(data.size):
        s = data[i]
        r = rng // total
        low += r * _fenwick_prefix(tree, s)
        if low > RC_MASK:
            _carry(out, pos)
            low &= RC_MASK
        rng = r * freq[s]
        while rng < RC_TOP:
            out[pos] = (low >> 24) & 0xFF
            pos += 1
            low = (low << 8) & RC_MASK
            rng <<= 8
        freq[s] += 1
        _fenwick_add(tree, s, 1)
        total += 1
        if total >= ADAPTIVE_HALVE_AT:
            total = _adaptive_halve(freq, tree)
    for _ in range(4):
        out[pos] = (low >> 24) & 0xFF
        pos += 1
        low = (low << 8) & RC_MASK
    return pos


@njit(cache=True, nogil=True)
def ab_decode(data, n, out):
    """Inverse of ab_encode; fills ``out`` with n bytes. 0 ok, 1 truncated."""
    if n <= 0:
        return 0
    if data.size < 4:
        return 1
    freq = np.ones(ADAPTIVE_SYMBOLS, dtype=np.int64)
    tree = np.zeros(ADAPTIVE_SYMBOLS + 1, dtype=np.int64)
    _fenwick_rebuild(freq, tree)
    total = np.int64(ADAPTIVE_SYMBOLS)

    low = np.int64(0)
    rng = np.int64(RC_MASK)
    code = np.int64(0)
    for pos in range(4):
        code = (code << 8) | data[pos]
    pos = 4
    for i in range(n):
        r = rng // total
        val = ((code - low) & RC_MASK) // r
        if val > total - 1:
            val = total - 1
        # Fenwick descent: largest s with prefix(s) <= val
        s = np.int64(0)
        rem = val
        bit = np.int64(ADAPTIVE_SYMBOLS >> 1)
        while bit > 0:
            nxt = s + bit
            if tree[nxt] <= rem:
                rem -= tree[nxt]
                s = nxt
            bit >>= 1
        cumlow = val - rem
        low = (low + r * cumlow) & RC_MASK
        rng = r * freq[s]
        while rng < RC_TOP:
            if pos >= data.size:
                return 1
            code = ((code << 8) | data[pos]) & RC_MASK
            pos += 1
            low = (low << 8) & RC_MASK
            rng <<= 8
        out[i] = s
        freq[s] += 1
        _fenwick_add(tree, s, 1)
        total += 1
        if total >= ADAPTIVE_HALVE_AT:
            total = _adaptive_halve(freq, tree)
    return 0


@njit(cache=True, nogil=True)
def em_iterate(x, weights, means, variances, var_floor, max_iter, tol):
    """In-place EM for a univariate Gaussian mixture.

    Updates the parameter arrays and fills ``trace`` with the per-iteration
    log-likelihood (computed before each M-step); returns the trace. Stops
    once the improvement drops below ``tol``.
    """
    n = x.size
    k = weights.size
    trace = np.empty(max_iter, dtype=np.float64)
    log_w = np.empty(k, dtype=np.float64)
    log_norm_c = np.empty(k, dtype=np.float64)
    inv_2v = np.empty(k, dtype=np.float64)
    t = np.empty(k, dtype=np.float64)
    nj = np.empty(k, dtype=np.float64)
    sj = np.empty(k, dtype=np.float64)
    qj = np.empty(k, dtype=np.float64)

    prev_ll = -np.inf
    it = 0
    while it < max_iter:
        for j in range(k):
            log_w[j] = np.log(weights[j])
            log_norm_c[j] = -0.5 * np.log(2.0 * np.pi * variances[j])
            inv_2v[j] = 0.5 / variances[j]
            nj[j] = 0.0
            sj[j] = 0.0
            qj[j] = 0.0

        ll = 0.0
        for i in range(n):
            xi = x[i]
            m = -np.inf
            for j in range(k):
                d = xi - means[j]
                t[j] = log_w[j] + log_norm_c[j] - d * d * inv_2v[j]
                if t[j] > m:
                    m = t[j]
            denom = 0.0
            for j in range(k):
                t[j] = np.exp(t[j] - m)
                denom += t[j]
            ll += m + np.log(denom)
            for j in range(k):
                g = t[j] / denom
                d = xi - means[j]
                nj[j] += g
                sj[j] += g * d
                qj[j] += g * d * d
        trace[it] = ll
        it += 1

        # M-step around the old means: var = E[(x-mu_old)^2] - shift^2
        for j in range(k):
            if nj[j] < 1e-12:
                nj[j] = 1e-12
            shift = sj[j] / nj[j]
            means[j] = means[j] + shift
            v = qj[j] / nj[j] - shift * shift
            variances[j] = v if v > var_floor else var_floor
            weights[j] = nj[j] / n

        if ll - prev_ll < tol and it > 1:
            break
        prev_ll = ll
    return trace[:it]


@njit(cache=True, nogil=True)
def varint_encode(values, out):
    """LEB128-encode non-negative int64 values; returns bytes written."""
    pos = 0
    for i in range(values.size):
        v = values[i]
        while v >= 0x80:
            out[pos] = (v & 0x7F) | 0x80
            pos += 1
            v >>= 7
        out[pos] = v
        pos += 1
    return pos


@njit(cache=True, nogil=True)
def varint_decode(data, n, out):
    """Decode n LEB128 values; returns bytes consumed, or -1 on truncation."""
    pos = 0
    for i in range(n):
        v = np.int64(0)
        shift = 0
        while True:
            if pos >= data.size or shift > 63:
                return -1
            b = data[pos]
            pos += 1
            v |= np.int64(b & 0x7F) << shift
            if b < 0x80:
                break
            shift += 7
        out[i] = v
    return pos
