"""Pure-Python Philox4x64-10 reference (Random123 definition)."""
M = (1 << 64) - 1
M0, M1 = 0xD2E7470EE14C6C93, 0xCA5A826395121157
W0, W1 = 0x9E3779B97F4A7C15, 0xBB67AE8584CAA73B


def _mulhilo(a, b):
    p = a * b
    return p >> 64, p & M


def philox4x64_10(ctr, key):
    c0, c1, c2, c3 = ctr
    k0, k1 = key
    for i in range(10):
        if i:
            k0, k1 = (k0 + W0) & M, (k1 + W1) & M
        hi0, lo0 = _mulhilo(M0, c0)
        hi1, lo1 = _mulhilo(M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def stream(seed, n):
    """Words of a stream keyed (seed, 0) whose counter starts at 1."""
    out, ctr = [], 0
    while len(out) < n:
        ctr += 1
        words = [(ctr >> (64 * i)) & M for i in range(4)]
        out += philox4x64_10(words, (seed, 0))
    return out[:n]
