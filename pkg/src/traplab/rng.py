"""Counter-based random numbers.

Every random quantity in traplab is a pure function of a 64-bit key and an
integer counter: ``uniform(key, i)`` hashes ``key + i * GOLDEN`` through the
SplitMix64 finalizer. There is no generator state to carry around, so a site
depth or a step mark can be recomputed in any order, in any process, and
inside numba kernels.

Keys are derived from a master seed with :func:`derive_key`, which hashes
``(master, purpose, index)`` with BLAKE2b.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


mix64_scalar = nb.njit(cache=True, inline="always")(_mix)
#: SplitMix64 finalizer (a bijection on 64-bit words), as a ufunc.
mix64 = nb.vectorize(["uint64(uint64)"], cache=True)(_mix)


@nb.njit(cache=True, inline="always")
def _counter_word(key, i):
    # i may be negative (site indices); reinterpret as two's complement
    return mix64_scalar(np.uint64(key) + np.uint64(np.int64(i)) * GOLDEN)


@nb.njit(cache=True, inline="always")
def uniform_closed(key, i):
    """Uniform on (0, 1], 53-bit resolution. Returns exactly 1.0 for the top word."""
    return ((_counter_word(key, i) >> _S11) + np.uint64(1)) * _TWO_M53


@nb.njit(cache=True, inline="always")
def uniform_open(key, i):
    """Uniform on the open interval (0, 1)."""
    return ((_counter_word(key, i) >> _S11) + 0.5) * _TWO_M53


@nb.njit(cache=True, inline="always")
def exponential(key, i):
    """Mean-one exponential, strictly positive."""
    return -np.log(uniform_open(key, i))


def uniform_closed_array(key: int, counters) -> np.ndarray:
    """Vectorized :func:`uniform_closed` for numpy callers."""
    c = np.asarray(counters, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        w = mix64(np.uint64(key) + c * GOLDEN)
    return ((w >> _S11) + np.uint64(1)).astype(np.float64) * _TWO_M53


def uniform_open_array(key: int, counters) -> np.ndarray:
    c = np.asarray(counters, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        w = mix64(np.uint64(key) + c * GOLDEN)
    return ((w >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def derive_key(master: int, purpose: str, index: int = 0) -> int:
    """Derive a 64-bit stream key from ``(master, purpose, index)``.

    Distinct purposes (``"env"``, ``"noise"``, ...) and trial indices give
    unrelated keys; the mapping is stable across platforms and Python versions.
    """
    h = hashlib.blake2b(digest_size=8, person=b"traplab-v1")
    h.update(int(master & MASK64).to_bytes(8, "little"))
    h.update(purpose.encode())
    h.update(int(index & MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def subkey(key: int, lane: int) -> int:
    """Split a key into independent lanes (direction bits, marks, ...)."""
    return int(mix64(np.uint64((key ^ (lane * 0xD1B54A32D192ED03)) & MASK64)))
