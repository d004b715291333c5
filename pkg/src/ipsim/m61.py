"""Mersenne-61 prime field arithmetic, scalar and numpy-vectorized.

Scalar ops use plain Python ints. The vectorized ops work on uint64 arrays
with 31/30-bit limb splitting so that no intermediate exceeds 64 bits; they
are cross-checked against the scalar reference in the test suite. q = 2^61-1.
"""

from __future__ import annotations

import numpy as np

Q = (1 << 61) - 1

# field elements are canonical Python ints in [0, Q)
FieldElement = int
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)
_QV = np.uint64(Q)
_S31 = np.uint64(31)
_S30 = np.uint64(30)
_S61 = np.uint64(61)


def fadd(a: int, b: int) -> int:
    s = a + b
    return s - Q if s >= Q else s


def fsub(a: int, b: int) -> int:
    s = a - b
    return s + Q if s < 0 else s


def fmul(a: int, b: int) -> int:
    p = a * b
    p = (p >> 61) + (p & Q)
    if p >= Q:
        p -= Q
    return p


def fneg(a: int) -> int:
    return 0 if a == 0 else Q - a


def finv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in GF(2^61-1)")
    return pow(a, Q - 2, Q)


def fe(x: int) -> int:
    """Canonical representative in [0, Q)."""
    return x % Q


def rand_fe(rng: np.random.Generator) -> int:
    """Uniform field element (rejection over 61 random bits)."""
    while True:
        v = int(rng.integers(0, 1 << 62)) & Q
        if v < Q:
            return v


def varr(values) -> np.ndarray:
    return np.asarray(values, dtype=np.uint64)


def vadd(a: np.ndarray, b) -> np.ndarray:
    s = a + (b if isinstance(b, np.ndarray) else np.uint64(b))
    return np.where(s >= _QV, s - _QV, s)


def vsub(a: np.ndarray, b) -> np.ndarray:
    bb = b if isinstance(b, np.ndarray) else np.uint64(b)
    return np.where(a >= bb, a - bb, a + _QV - bb)


def vmul(a: np.ndarray, b) -> np.ndarray:
    """(a * b) mod Q elementwise; inputs must be canonical (< Q)."""
    if not isinstance(b, np.ndarray):
        b = np.full_like(a, np.uint64(b))
    a_hi = a >> _S31
    a_lo = a & _MASK31
    b_hi = b >> _S31
    b_lo = b & _MASK31
    hh = a_hi * b_hi  # < 2^60; contributes hh * 2^62 = 2*hh mod Q
    mm = a_hi * b_lo + a_lo * b_hi  # < 2^62; contributes mm * 2^31
    ll = a_lo * b_lo  # < 2^62
    t = (hh << np.uint64(1)) + (mm >> _S30) + ((mm & _MASK30) << _S31) + ll
    r = (t >> _S61) + (t & _QV)
    return np.where(r >= _QV, r - _QV, r)


def vsum(a: np.ndarray) -> int:
    """Sum of canonical elements mod Q."""
    a = np.ascontiguousarray(a, dtype=np.uint64)
    while a.size > 1:
        if a.size % 4:
            a = np.concatenate([a, np.zeros(4 - a.size % 4, dtype=np.uint64)])
        a = a.reshape(-1, 4).sum(axis=1)  # 4 * (2^61-1) < 2^63
        a = (a >> _S61) + (a & _QV)
        a = np.where(a >= _QV, a - _QV, a)
    return int(a[0]) if a.size else 0


def lagrange_weights(num_nodes: int) -> list[int]:
    """Barycentric weights for integer nodes 0..num_nodes-1 over GF(Q)."""
    weights = []
    for j in range(num_nodes):
        denom = 1
        for i in range(num_nodes):
            if i != j:
                denom = fmul(denom, fsub(j % Q, i % Q))
        weights.append(finv(denom))
    return weights


def lagrange_eval(values, t: int, weights: list[int] | None = None) -> int:
    """Unique degree <= L-1 interpolant through (j, values[j]) at t, O(L)."""
    values = list(values)
    length = len(values)
    t = t % Q
    if t < length:
        return values[t] % Q
    if weights is None:
        weights = lagrange_weights(length)
    ell = 1
    acc = 0
    for j in range(length):
        diff = fsub(t, j)
        ell = fmul(ell, diff)
        acc = fadd(acc, fmul(weights[j], fmul(values[j] % Q, finv(diff))))
    return fmul(ell, acc)


class StreamedNodeEval:
    """Streaming evaluation of an interpolant at a fixed point with O(1) memory.

    Feed node values one at a time; also captures the values at nodes 0 and 1
    for the round-consistency check. Holds a constant number of field-element
    registers regardless of message length.
    """

    def __init__(self, t: int, num_nodes: int, weights: list[int]):
        self.t = t % Q
        self.num_nodes = num_nodes
        self.weights = weights  # shared constant table, not per-message state
        self.j = 0
        self.ell = 1
        self.acc = 0
        self.at_zero = None
        self.at_one = None
        self.node_hit = None

    def feed(self, value: int):
        value %= Q
        j = self.j
        if j == 0:
            self.at_zero = value
        elif j == 1:
            self.at_one = value
        if self.t == j % Q:
            self.node_hit = value
        diff = fsub(self.t, j)
        if diff != 0:
            self.ell = fmul(self.ell, diff)
            self.acc = fadd(self.acc, fmul(self.weights[j], fmul(value, finv(diff))))
        self.j += 1

    def result(self) -> int:
        if self.j != self.num_nodes:
            raise ValueError("message length mismatch")
        if self.node_hit is not None:
            return self.node_hit
        return fmul(self.ell, self.acc)
