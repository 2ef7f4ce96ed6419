"""Counter-based Gaussian noise streams.

Every standard-normal deviate consumed anywhere in the package is addressed
by (seed, trajectory, step, component): the same address always yields the
same value, no matter which worker draws it, in which order, or via which
backend.  Step -1 is reserved as the sentinel address for the cached
increment the non-Markovian scheme needs before its first step; a separate
tag keeps initial-condition sampling out of the step-noise address space.

The generator is Philox4x32-10 feeding a Box-Muller transform.  One Philox
block yields two deviates, so component c lives in block c // 2 and takes
the cosine (even c) or sine (odd c) branch.  The integer stage is exact by
construction and the float stage uses only libm calls, so the pure-Python
mirror in `_kernels_py` and the C loops in `_kernels` reproduce these values
bit for bit.

Address limits: trajectory < 2**56, -1 <= step < 2**40 - 1, component < 2**29.
"""

import math

import numpy as np

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85

MASK32 = 0xFFFFFFFF
TWO_PI = 2.0 * math.pi
U53 = 2.0 ** -53

TAG_STEP = 0
TAG_INIT = 1


def philox4x32(c0: int, c1: int, c2: int, c3: int, k0: int, k1: int):
    """Run 10 Philox4x32 rounds on one counter block; returns 4 uint32 words."""
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0, lo0 = p0 >> 32, p0 & MASK32
        hi1, lo1 = p1 >> 32, p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


def _counter(traj: int, step: int, tag: int, block: int):
    s_enc = step + 1  # sentinel step -1 encodes to 0
    c0 = block | (tag << 28)
    c1 = s_enc & MASK32
    c2 = ((s_enc >> 32) & 0xFF) | (((traj >> 32) & 0xFFFFFF) << 8)
    c3 = traj & MASK32
    return c0, c1, c2, c3


def normal_pair(seed: int, traj: int, step: int, tag: int, block: int):
    """The two standard normals of one Philox block (Box-Muller pair)."""
    k0 = seed & MASK32
    k1 = (seed >> 32) & MASK32
    o0, o1, o2, o3 = philox4x32(*_counter(traj, step, tag, block), k0, k1)
    u1 = (((o0 << 32 | o1) >> 11) + 1) * U53  # in (0, 1]
    u2 = (((o2 << 32 | o3) >> 11) + 1) * U53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(TWO_PI * u2), r * math.sin(TWO_PI * u2)


def normal_at(seed: int, traj: int, step: int, comp: int, tag: int = TAG_STEP) -> float:
    """Standard normal deviate at a single (trajectory, step, component) address."""
    pair = normal_pair(seed, traj, step, tag, comp >> 1)
    return pair[comp & 1]


def normals(seed: int, traj: int, step: int, dim: int, tag: int = TAG_STEP) -> np.ndarray:
    """Components 0..dim-1 of the step's noise vector."""
    out = np.empty(dim)
    for b in range((dim + 1) // 2):
        z0, z1 = normal_pair(seed, traj, step, tag, b)
        out[2 * b] = z0
        if 2 * b + 1 < dim:
            out[2 * b + 1] = z1
    return out


class NoiseStream:
    """Seeded, stateless noise source addressed by (trajectory, step, component)."""

    def __init__(self, seed: int):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed

    def normal(self, traj: int, step: int, comp: int) -> float:
        return normal_at(self.seed, traj, step, comp)

    def normals(self, traj: int, step: int, dim: int) -> np.ndarray:
        return normals(self.seed, traj, step, dim)

    def initial_normal(self, traj: int, attempt: int) -> float:
        """Deviates reserved for initial-condition sampling (separate tag)."""
        return normal_at(self.seed, traj, attempt, 0, tag=TAG_INIT)
