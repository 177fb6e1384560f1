"""Counter-based Gaussian streams (Philox4x32-10).

Every normal draw is a pure function of ``(seed, path, step, block)``, so a
path's noise does not depend on how many other paths are simulated or in which
order.  Both backends produce the same 32-bit words; the floats agree to the
last few ulps of ``log``/``cos``.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF
ROUNDS = 10
TWO_PI = 2.0 * np.pi
INV_2_32 = 1.0 / 4294967296.0


def split_seed(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & MASK32, (seed >> 32) & MASK32


# ---------------------------------------------------------------- numpy path


def philox4x32(counter, key):
    """Vectorised Philox4x32-10.

    ``counter`` is a ``(..., 4)`` integer array and ``key`` a ``(..., 2)``
    array (broadcastable).  Returns the ``(..., 4)`` uint64 words, each < 2**32.
    """
    c = np.asarray(counter, dtype=np.uint64) & np.uint64(MASK32)
    k = np.asarray(key, dtype=np.uint64) & np.uint64(MASK32)
    c0, c1, c2, c3 = (c[..., i].copy() for i in range(4))
    k0 = np.broadcast_to(k[..., 0], c0.shape).copy()
    k1 = np.broadcast_to(k[..., 1], c0.shape).copy()
    m0 = np.uint64(PHILOX_M0)
    m1 = np.uint64(PHILOX_M1)
    mask = np.uint64(MASK32)
    s32 = np.uint64(32)
    for r in range(ROUNDS):
        if r > 0:
            k0 = (k0 + np.uint64(PHILOX_W0)) & mask
            k1 = (k1 + np.uint64(PHILOX_W1)) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        hi0, lo0 = p0 >> s32, p0 & mask
        hi1, lo1 = p1 >> s32, p1 & mask
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def _box_muller(words):
    u = (words.astype(np.float64) + 0.5) * INV_2_32
    r0 = np.sqrt(-2.0 * np.log(u[..., 0]))
    r1 = np.sqrt(-2.0 * np.log(u[..., 2]))
    a0 = TWO_PI * u[..., 1]
    a1 = TWO_PI * u[..., 3]
    return np.stack([r0 * np.cos(a0), r0 * np.sin(a0), r1 * np.cos(a1), r1 * np.sin(a1)], axis=-1)


def normals_numpy(seed, paths, step, k):
    """Standard normals of shape ``(len(paths), k)`` for one time step."""
    paths = np.asarray(paths, dtype=np.uint64)
    lo, hi = split_seed(seed)
    nblocks = (k + 3) // 4
    out = np.empty((paths.shape[0], 4 * nblocks))
    for b in range(nblocks):
        ctr = np.empty((paths.shape[0], 4), dtype=np.uint64)
        ctr[:, 0] = step
        ctr[:, 1] = b
        ctr[:, 2] = paths & np.uint64(MASK32)
        ctr[:, 3] = paths >> np.uint64(32)
        words = philox4x32(ctr, np.array([lo, hi], dtype=np.uint64))
        out[:, 4 * b : 4 * b + 4] = _box_muller(words)
    return out[:, :k]


# ---------------------------------------------------------------- numba path


@maybe_njit
def _philox_scalar(c0, c1, c2, c3, k0, k1):
    mask = np.uint64(MASK32)
    for r in range(ROUNDS):
        if r > 0:
            k0 = (k0 + np.uint64(PHILOX_W0)) & mask
            k1 = (k1 + np.uint64(PHILOX_W1)) & mask
        p0 = np.uint64(PHILOX_M0) * c0
        p1 = np.uint64(PHILOX_M1) * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & mask
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & mask
        n0 = hi1 ^ c1 ^ k0
        n2 = hi0 ^ c3 ^ k1
        c0 = n0
        c1 = lo1
        c2 = n2
        c3 = lo0
    return c0, c1, c2, c3


@maybe_njit
def fill_normals(seed_lo, seed_hi, path, step, out):
    """Write ``len(out)`` normals for ``(path, step)`` into ``out``."""
    k = out.shape[0]
    nblocks = (k + 3) // 4
    plo = np.uint64(path) & np.uint64(MASK32)
    phi = np.uint64(path) >> np.uint64(32)
    for b in range(nblocks):
        w0, w1, w2, w3 = _philox_scalar(
            np.uint64(step), np.uint64(b), plo, phi, np.uint64(seed_lo), np.uint64(seed_hi)
        )
        base = 4 * b
        # only evaluate the transcendental pairs that are actually consumed
        r0 = np.sqrt(-2.0 * np.log((np.float64(w0) + 0.5) * INV_2_32))
        a0 = TWO_PI * ((np.float64(w1) + 0.5) * INV_2_32)
        out[base] = r0 * np.cos(a0)
        if base + 1 < k:
            out[base + 1] = r0 * np.sin(a0)
        if base + 2 < k:
            r1 = np.sqrt(-2.0 * np.log((np.float64(w2) + 0.5) * INV_2_32))
            a1 = TWO_PI * ((np.float64(w3) + 0.5) * INV_2_32)
            out[base + 2] = r1 * np.cos(a1)
            if base + 3 < k:
                out[base + 3] = r1 * np.sin(a1)


@maybe_njit
def _normals_kernel(seed_lo, seed_hi, paths, step, out):
    for i in range(paths.shape[0]):
        fill_normals(seed_lo, seed_hi, paths[i], step, out[i])


def normals_numba(seed, paths, step, k):
    paths = np.ascontiguousarray(paths, dtype=np.int64)
    lo, hi = split_seed(seed)
    out = np.empty((paths.shape[0], k))
    _normals_kernel(lo, hi, paths, step, out)
    return out


def normals(seed, paths, step, k):
    """Dispatching entry point; see :func:`normals_numpy`."""
    if NUMBA_ENABLED:
        return normals_numba(seed, paths, step, k)
    return normals_numpy(seed, paths, step, k)
