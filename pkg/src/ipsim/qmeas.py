"""Measurement and sampling primitives.

Basis measurements, two-outcome POVMs, SWAP tests, Bell-difference sampling,
two-copy Pauli-moment sampling and exact-uniform Clifford sampling. All
sampling is exact-law: outcome probabilities are computed from the classical
state descriptions the simulator holds, then sampled. Pauli phase convention
is fixed globally to the Hermitian form W = i^(x.z) X^x Z^z, so every Pauli
expectation is real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qcore import (
    DimensionError,
    InvariantError,
    PureState,
    UnitaryOp,
)

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class PauliLabel:
    """n-qubit Hermitian Pauli W = i^(x.z) X^x Z^z, addressed by two n-bit ints."""

    n: int
    x: int
    z: int

    def __post_init__(self):
        if not (0 <= self.x < (1 << self.n) and 0 <= self.z < (1 << self.n)):
            raise InvariantError("pauli bits out of range for n qubits")

    @property
    def index(self) -> int:
        """Flat index x + (z << n) into length-4^n arrays."""
        return self.x + (self.z << self.n)

    @classmethod
    def from_index(cls, n: int, index: int) -> "PauliLabel":
        mask = (1 << n) - 1
        return cls(n=n, x=index & mask, z=(index >> n) & mask)

    def xor(self, other: "PauliLabel") -> "PauliLabel":
        return PauliLabel(self.n, self.x ^ other.x, self.z ^ other.z)

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0


@dataclass(frozen=True)
class MeasurementOutcome:
    value: int
    basis_tag: str


@lru_cache(maxsize=16384)
def dense_pauli(label: PauliLabel) -> np.ndarray:
    """Dense 2^n x 2^n matrix of the Hermitian Pauli (cached, read-only)."""
    n, x, z = label.n, label.x, label.z
    d = 1 << n
    j = np.arange(d)
    cols = j ^ x
    signs = 1 - 2 * (_popcount_array(j & z) & 1)
    phase = 1j ** (bin(x & z).count("1") % 4)
    mat = np.zeros((d, d), dtype=complex)
    # W|j> = i^(x.z) (-1)^(z.j) |j ^ x>
    mat[cols, j] = phase * signs
    mat.setflags(write=False)
    return mat


def _popcount_array(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    v = a.copy()
    while np.any(v):
        out += v & 1
        v >>= 1
    return out


@lru_cache(maxsize=8)
def _hadamard_sign_matrix(n: int) -> np.ndarray:
    """H[z, m] = (-1)^popcount(z & m), the Sylvester-Hadamard sign matrix."""
    h = np.array([[1.0]])
    block = np.array([[1.0, 1.0], [1.0, -1.0]])
    for _ in range(n):
        h = np.kron(h, block)
    return h


def num_qubits(psi: PureState) -> int:
    n = int(round(np.log2(psi.dim)))
    if (1 << n) != psi.dim:
        raise DimensionError(f"dimension {psi.dim} is not a power of two")
    return n


def pauli_expectations(psi: PureState) -> np.ndarray:
    """All 4^n expectations <psi|W_a|psi>, indexed by a = x + (z << n)."""
    n = num_qubits(psi)
    d = psi.dim
    amps = psi.amplitudes
    h = _hadamard_sign_matrix(n)
    j = np.arange(d)
    out = np.empty(d * d)
    for x in range(d):
        # <W_(x,z)> = i^(x.z) sum_m (-1)^(z.m) psi_m conj(psi_(m^x))
        v = amps * amps[j ^ x].conj()
        vals = h @ v
        phases = 1j ** (_popcount_array(np.full(d, x) & np.arange(d)) % 4)
        out[x + (np.arange(d) << n)] = np.real(phases * vals)
    return out


def characteristic_distribution(psi: PureState) -> np.ndarray:
    """p(a) = 2^-n <psi|W_a|psi>^2; sums to 1 for pure states."""
    n = num_qubits(psi)
    exps = pauli_expectations(psi)
    p = exps**2 / (1 << n)
    total = p.sum()
    if abs(total - 1.0) > 1e-8:
        raise InvariantError(f"characteristic distribution sums to {total}, state not pure?")
    return p / total


def measure_in_basis(rho, u: UnitaryOp, rng: np.random.Generator) -> int:
    """Outcome i with probability <i|U+ rho U|i>."""
    mat = rho.entries if hasattr(rho, "entries") else np.asarray(rho, dtype=complex)
    if mat.shape[0] != u.dim:
        raise DimensionError(f"dim mismatch {mat.shape[0]} vs {u.dim}")
    probs = basis_probabilities(mat, u)
    return int(rng.choice(probs.size, p=probs))


def basis_probabilities(mat: np.ndarray, u: UnitaryOp) -> np.ndarray:
    ue = u.entries
    probs = np.real(np.einsum("ji,jk,ki->i", ue.conj(), mat, ue))
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvariantError(f"outcome probabilities sum to {total}")
    return probs / total


def two_outcome_measure(rho, proj: np.ndarray, rng: np.random.Generator) -> int:
    """1 with probability Tr[proj rho]; proj must be an orthogonal projector."""
    proj = np.asarray(proj, dtype=complex)
    if np.abs(proj - proj.conj().T).max() > 1e-8 or np.abs(proj @ proj - proj).max() > 1e-8:
        raise InvariantError("two_outcome_measure needs an idempotent Hermitian projector")
    mat = rho.entries if hasattr(rho, "entries") else np.asarray(rho, dtype=complex)
    if mat.shape != proj.shape:
        raise DimensionError("projector/state dimension mismatch")
    p = float(np.real(np.vdot(proj, mat)))
    p = min(max(p, 0.0), 1.0)
    return int(rng.random() < p)


def swap_test(rho, sigma, rng: np.random.Generator) -> int:
    """1 (accept) with probability (1 + Tr[rho sigma]) / 2; consumes one copy of each."""
    a = rho.entries if hasattr(rho, "entries") else np.asarray(rho, dtype=complex)
    b = sigma.entries if hasattr(sigma, "entries") else np.asarray(sigma, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError("swap_test dimension mismatch")
    return int(rng.random() < swap_accept_probability(a, b))


def swap_accept_probability(a: np.ndarray, b: np.ndarray) -> float:
    # Tr[a b] for Hermitian a equals <a, b> elementwise
    overlap = float(np.real(np.vdot(a, b)))
    return min(max((1.0 + overlap) / 2.0, 0.0), 1.0)


def bell_difference_sample(
    psi: PureState,
    rng: np.random.Generator,
    char_dist: np.ndarray | None = None,
) -> PauliLabel:
    """One Bell-difference sample: a Pauli label distributed as q(x) = (p * p)(x).

    Physically a 4-copy procedure; realized here by sampling the characteristic
    distribution twice and XOR-ing the labels, which is distribution-identical.
    Pass ``char_dist`` to reuse a precomputed characteristic distribution.
    """
    n = num_qubits(psi)
    p = characteristic_distribution(psi) if char_dist is None else char_dist
    a1, a2 = rng.choice(p.size, size=2, p=p)
    return PauliLabel.from_index(n, int(a1) ^ int(a2))


def pauli_moment_sample(
    psi: PureState,
    label: PauliLabel,
    rng: np.random.Generator,
    expectation: float | None = None,
) -> int:
    """Bit from measuring W on two independent copies and multiplying outcomes.

    The returned bit is (z1*z2 + 1)/2 for the two +-1 outcomes, so its mean is
    (<W>^2 + 1)/2; callers map the mean back through m -> 2m - 1.
    """
    if expectation is None:
        if (1 << label.n) != psi.dim:
            raise DimensionError("pauli label qubit count mismatch")
        expectation = float(pauli_expectations(psi)[label.index])
    p_plus = (1.0 + expectation) / 2.0
    z1 = 1 if rng.random() < p_plus else -1
    z2 = 1 if rng.random() < p_plus else -1
    return (z1 * z2 + 1) // 2


# ---------------------------------------------------------------------------
# Uniform Clifford sampling via the symplectic-group index construction
# (transvection decomposition), then dense synthesis from the tableau.
# ---------------------------------------------------------------------------


def _symplectic_inner(v: np.ndarray, w: np.ndarray) -> int:
    t = 0
    for i in range(v.size >> 1):
        t += v[2 * i] * w[2 * i + 1] + w[2 * i] * v[2 * i + 1]
    return t % 2


def _transvection(k: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (v + _symplectic_inner(k, v) * k) % 2


def _int_to_bits(i: int, n: int) -> np.ndarray:
    return np.array([(i >> j) & 1 for j in range(n)], dtype=np.int8)


def _find_transvection(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pair (h1, h2) of transvections with y = Z_h1 Z_h2 x; rows may be zero."""
    nn = x.size
    out = np.zeros((2, nn), dtype=np.int8)
    if np.array_equal(x, y):
        return out
    if _symplectic_inner(x, y) == 1:
        out[0] = (x + y) % 2
        return out
    z = np.zeros(nn, dtype=np.int8)
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) != 0 and (y[ii] + y[ii + 1]) != 0:
            z[ii] = (x[ii] + y[ii]) % 2
            z[ii + 1] = (x[ii + 1] + y[ii + 1]) % 2
            if z[ii] + z[ii + 1] == 0:
                z[ii + 1] = 1
                if x[ii] != x[ii + 1]:
                    z[ii] = 1
            out[0] = (x + z) % 2
            out[1] = (y + z) % 2
            return out
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) != 0 and (y[ii] + y[ii + 1]) == 0:
            if x[ii] == x[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = x[ii]
                z[ii] = x[ii + 1]
            break
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) == 0 and (y[ii] + y[ii + 1]) != 0:
            if y[ii] == y[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = y[ii]
                z[ii] = y[ii + 1]
            break
    out[0] = (x + z) % 2
    out[1] = (y + z) % 2
    return out


def sample_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform 2n x 2n symplectic matrix over GF(2), interleaved (x1,z1,...) layout.

    Per-level uniform sub-indices replace the single canonical index of the
    published construction; the decomposition is a bijection, so uniformity
    is preserved.
    """
    nn = 2 * n
    k = int(rng.integers(1, 1 << nn))
    f1 = _int_to_bits(k, nn)
    e1 = np.zeros(nn, dtype=np.int8)
    e1[0] = 1
    t_pair = _find_transvection(e1, f1)
    bits = rng.integers(0, 2, size=nn - 1).astype(np.int8)
    eprime = e1.copy()
    for j in range(2, nn):
        eprime[j] = bits[j - 1]
    h0 = _transvection(t_pair[0], eprime)
    h0 = _transvection(t_pair[1], h0)
    if bits[0] == 1:
        f1 = np.zeros(nn, dtype=np.int8)
    if n == 1:
        g = np.eye(2, dtype=np.int8)
    else:
        g = np.zeros((nn, nn), dtype=np.int8)
        g[:2, :2] = np.eye(2, dtype=np.int8)
        g[2:, 2:] = sample_symplectic(n - 1, rng)
    for j in range(nn):
        row = g[j]
        row = _transvection(t_pair[0], row)
        row = _transvection(t_pair[1], row)
        row = _transvection(h0, row)
        row = _transvection(f1, row)
        g[j] = row
    return g


def _interleaved_to_label(n: int, v: np.ndarray) -> PauliLabel:
    x = sum(int(v[2 * i]) << i for i in range(n))
    z = sum(int(v[2 * i + 1]) << i for i in range(n))
    return PauliLabel(n, x, z)


def sample_uniform_clifford(n: int, rng: np.random.Generator) -> UnitaryOp:
    """Exactly uniform n-qubit Clifford (mod global phase) as a dense unitary.

    Uniform symplectic matrix plus 2n uniform sign bits fix the conjugation
    action on all generators; the dense matrix is synthesized column by
    column from the stabilizer state it maps |0..0> to.
    """
    if n > 6:
        raise DimensionError("dense Clifford sampling capped at n = 6")
    d = 1 << n
    g = sample_symplectic(n, rng)
    signs = rng.integers(0, 2, size=2 * n)
    # row 2j = image of X_j, row 2j+1 = image of Z_j
    img_x = []
    img_z = []
    for j in range(n):
        gx = dense_pauli(_interleaved_to_label(n, g[2 * j])) * (-1) ** int(signs[2 * j])
        gz = dense_pauli(_interleaved_to_label(n, g[2 * j + 1])) * (-1) ** int(signs[2 * j + 1])
        img_x.append(gx)
        img_z.append(gz)
    proj = np.eye(d, dtype=complex)
    for gz in img_z:
        proj = proj @ (np.eye(d, dtype=complex) + gz) / 2
    col_norms = np.linalg.norm(proj, axis=0)
    anchor = int(np.argmax(col_norms))
    phi0 = proj[:, anchor] / col_norms[anchor]
    cols = np.empty((d, d), dtype=complex)
    cols[:, 0] = phi0
    for x in range(1, d):
        v = phi0
        for j in range(n):
            if (x >> j) & 1:
                v = img_x[j] @ v
        cols[:, x] = v
    return UnitaryOp(cols)
