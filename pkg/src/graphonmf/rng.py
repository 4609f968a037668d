"""Stateless, counter-based Gaussian streams keyed by particle label.

Every random number is a pure function of ``(master_seed, stream, label,
replica, member, step)``: the key is hashed with splitmix64 and fed to a
vectorised Philox4x32-10 block cipher whose counter carries the step.  Two
simulations that ask for the same label and step therefore see the same
Brownian increment, which is how the finite system and its limit are coupled.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

STREAMS = {
    "brownian": 1,
    "init": 2,
    "flow-brownian": 3,
    "flow-init": 4,
    "surrogate-brownian": 5,
    "surrogate-init": 6,
    "pair-brownian": 7,
    "pair-init": 8,
}

# counter word 3 separates the draws made under one key
_PURPOSE_NORMAL = 0
_PURPOSE_UNIFORM = 1


def philox4x32(counter, key, rounds=10):
    """Philox4x32 on arrays: ``counter`` is (4, n) and ``key`` (2, n), both uint32-valued.

    Returns the four output words as a (4, n) uint64 array.
    """
    c0, c1, c2, c3 = (np.asarray(w, dtype=np.uint64) & _MASK32 for w in counter)
    k0, k1 = (np.asarray(w, dtype=np.uint64) & _MASK32 for w in key)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _SHIFT32) ^ c1 ^ k0, p1 & _MASK32,
                          (p0 >> _SHIFT32) ^ c3 ^ k1, p0 & _MASK32)
    return np.stack([c0, c1, c2, c3])


def splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_key(*parts):
    """Fold integer arrays into one 64-bit key per element."""
    parts = np.broadcast_arrays(*(np.asarray(p).astype(np.uint64) for p in parts))
    h = np.zeros(parts[0].shape, dtype=np.uint64)
    for p in parts:
        h = splitmix64(h ^ p)
    return h


def _uniform53(hi, lo):
    """Double in [0, 1) from two 32-bit words."""
    a = (hi >> np.uint64(5)).astype(np.float64)
    b = (lo >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b) / 9007199254740992.0


def _words(keys, step, block, purpose):
    keys = np.asarray(keys, dtype=np.uint64)
    step = np.uint64(step)
    n = keys.shape[0]
    ctr = (np.full(n, step & _MASK32), np.full(n, step >> _SHIFT32),
           np.full(n, np.uint64(block)), np.full(n, np.uint64(purpose)))
    return philox4x32(ctr, (keys & _MASK32, keys >> _SHIFT32))


def uniforms(keys, step, count):
    """Array (len(keys), count) of U[0, 1) draws."""
    out = []
    for block in range((count + 1) // 2):
        w = _words(keys, step, block, _PURPOSE_UNIFORM)
        out.append(_uniform53(w[0], w[1]))
        out.append(_uniform53(w[2], w[3]))
    return np.stack(out[:count], axis=1) if count else np.empty((len(keys), 0))


def normals(keys, step, count):
    """Array (len(keys), count) of standard normals (Box-Muller on Philox output)."""
    out = []
    for block in range((count + 1) // 2):
        w = _words(keys, step, block, _PURPOSE_NORMAL)
        u1 = 1.0 - _uniform53(w[0], w[1])  # (0, 1]
        u2 = _uniform53(w[2], w[3])
        r = np.sqrt(-2.0 * np.log(u1))
        out.append(r * np.cos(2.0 * np.pi * u2))
        out.append(r * np.sin(2.0 * np.pi * u2))
    return np.stack(out[:count], axis=1) if count else np.empty((len(keys), 0))


def reduce_label(index, resolution):
    """Label ``index / resolution`` in lowest terms, so equal labels share a stream."""
    index = np.asarray(index, dtype=np.int64)
    g = np.gcd(index, np.int64(resolution))
    g = np.where(g == 0, 1, g)
    return index // g, np.int64(resolution) // g


class BrownianStore:
    """Deterministic source of label-keyed Brownian increments and initial draws.

    Labels are exact fractions ``index / resolution``; the same fraction yields
    the same stream whatever resolution it came from.
    """

    def __init__(self, master_seed):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF

    def __repr__(self):
        return f"BrownianStore(master_seed={self.master_seed})"

    def keys(self, index, resolution, replica=0, member=0, stream="brownian"):
        num, den = reduce_label(index, resolution)
        num, member = np.broadcast_arrays(num, np.asarray(member, dtype=np.int64))
        return hash_key(np.uint64(self.master_seed), np.uint64(STREAMS[stream]),
                        num, np.broadcast_to(den, num.shape), np.uint64(replica), member)

    def increments(self, keys, step, dim, dt):
        """Gaussian increments of variance ``dt`` for Brownian step ``step`` (0-based)."""
        return normals(keys, step, dim) * np.sqrt(dt)

    def normals(self, keys, dim, step=0):
        return normals(keys, step, dim)

    def uniforms(self, keys, count, step=0):
        return uniforms(keys, step, count)
