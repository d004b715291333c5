"""Tests for measurement primitives: Born-rule laws, SWAP test, Bell sampling,
Pauli moments and uniform Clifford sampling."""

import numpy as np
import pytest

from ipsim import qcore, qmeas
from ipsim.qcore import InvariantError, UnitaryOp, basis_state, maximally_mixed
from ipsim.qmeas import (
    PauliLabel,
    bell_difference_sample,
    characteristic_distribution,
    dense_pauli,
    measure_in_basis,
    pauli_expectations,
    pauli_moment_sample,
    sample_uniform_clifford,
    swap_test,
    two_outcome_measure,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def t_state():
    return qcore.PureState(np.array([1.0, np.exp(1j * np.pi / 4)]) / np.sqrt(2))


from statutil import chi_square_pvalue


class TestPauliMachinery:
    def test_dense_paulis_single_qubit(self):
        X = dense_pauli(PauliLabel(1, 1, 0))
        Z = dense_pauli(PauliLabel(1, 0, 1))
        Y = dense_pauli(PauliLabel(1, 1, 1))
        assert np.allclose(X, [[0, 1], [1, 0]])
        assert np.allclose(Z, [[1, 0], [0, -1]])
        assert np.allclose(Y, [[0, -1j], [1j, 0]])

    def test_paulis_hermitian_involutions(self):
        g = rng(1)
        for _ in range(30):
            n = int(g.integers(1, 4))
            lab = PauliLabel.from_index(n, int(g.integers(0, 4**n)))
            W = dense_pauli(lab)
            assert np.allclose(W, W.conj().T)
            assert np.allclose(W @ W, np.eye(2**n))

    def test_expectations_match_dense_oracle(self):
        g = rng(2)
        for n in (1, 2, 3):
            psi = qcore.sample_pure_state(2**n, g)
            exps = pauli_expectations(psi)
            for idx in range(4**n):
                W = dense_pauli(PauliLabel.from_index(n, idx))
                ref = float(np.vdot(psi.amplitudes, W @ psi.amplitudes).real)
                assert abs(exps[idx] - ref) < 1e-11

    def test_characteristic_distribution_normalized(self):
        g = rng(3)
        for n in (1, 2):
            p = characteristic_distribution(qcore.sample_pure_state(2**n, g))
            assert abs(p.sum() - 1.0) < 1e-12
            assert p.min() >= 0


class TestMeasurementOutcome:
    def test_record_fields(self):
        out = qmeas.MeasurementOutcome(value=3, basis_tag="haar-0")
        assert out.value == 3 and out.basis_tag == "haar-0"


class TestMeasureInBasis:
    def test_deterministic_on_eigenstate(self):
        g = rng(4)
        ident = UnitaryOp(np.eye(2, dtype=complex))
        for _ in range(20):
            assert measure_in_basis(basis_state(2, 0).density(), ident, g) == 0

    def test_uniform_chi_square(self):
        g = rng(5)
        u = qcore.sample_haar_unitary(4, g)
        probs = qmeas.basis_probabilities(maximally_mixed(4).entries, u)
        shots = 100_000
        counts = np.bincount(g.choice(4, size=shots, p=probs), minlength=4)
        assert chi_square_pvalue(counts, [shots / 4] * 4) > 0.01

    def test_born_frequencies(self):
        g = rng(6)
        rho = qcore.DensityMatrix(np.diag([0.7, 0.3]).astype(complex))
        ident = UnitaryOp(np.eye(2, dtype=complex))
        shots = 10_000
        zeros = sum(measure_in_basis(rho, ident, g) == 0 for _ in range(shots))
        sigma = np.sqrt(0.7 * 0.3 / shots)
        assert abs(zeros / shots - 0.7) < 3 * sigma + 0.005


class TestTwoOutcome:
    def test_deterministic_cases(self):
        g = rng(7)
        p0 = basis_state(2, 0).density().entries
        assert all(two_outcome_measure(basis_state(2, 0).density(), p0, g) == 1 for _ in range(10))
        assert all(two_outcome_measure(basis_state(2, 1).density(), p0, g) == 0 for _ in range(10))

    def test_born_rule_half(self):
        g = rng(8)
        p0 = basis_state(2, 0).density().entries
        shots = 10_000
        ones = sum(two_outcome_measure(maximally_mixed(2), p0, g) for _ in range(shots))
        assert abs(ones / shots - 0.5) < 3 * 0.5 / np.sqrt(shots) + 0.005

    def test_rejects_non_projector(self):
        with pytest.raises(InvariantError):
            two_outcome_measure(maximally_mixed(2), np.diag([0.5, 0.5]), rng(9))


class TestSwapTest:
    def test_identical_pure_always_accepts(self):
        g = rng(10)
        rho = basis_state(2, 0).density()
        assert all(swap_test(rho, rho, g) for _ in range(50))

    def test_orthogonal_accept_half(self):
        g = rng(11)
        a, b = basis_state(2, 0).density(), basis_state(2, 1).density()
        hits = sum(swap_test(a, b, g) for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_maximally_mixed_three_quarters(self):
        g = rng(12)
        m = maximally_mixed(2)
        hits = sum(swap_test(m, m, g) for _ in range(10_000))
        assert abs(hits / 10_000 - 0.75) < 0.02

    def test_law_on_random_pairs(self):
        g = rng(13)
        trials = 10_000
        for _ in range(50):
            d = int(g.integers(2, 9))
            a = qcore.sample_state(d, int(g.integers(1, d + 1)), g)
            b = qcore.sample_state(d, int(g.integers(1, d + 1)), g)
            p = (1 + np.vdot(a.entries, b.entries).real) / 2
            hits = np.count_nonzero(g.random(trials) < p)  # exact-law shortcut
            hits_direct = sum(swap_test(a, b, g) for _ in range(200))
            sigma = np.sqrt(p * (1 - p) / 200) + 1e-6
            assert abs(hits_direct / 200 - p) < 4 * sigma + 0.02
            assert abs(hits / trials - p) < 4 * np.sqrt(p * (1 - p) / trials) + 0.01


class TestBellDifference:
    def test_zero_state_stays_in_z_group(self):
        g = rng(14)
        psi = basis_state(4, 0)  # |00>
        for _ in range(200):
            lab = bell_difference_sample(psi, g)
            assert lab.x == 0  # Z-only group {I, Z}^n

    def test_t_state_matches_convolution(self):
        g = rng(15)
        psi = t_state()
        p = characteristic_distribution(psi)
        q = np.zeros(4)
        for a in range(4):
            for b in range(4):
                q[a ^ b] += p[a] * p[b]
        samples = 100_000
        counts = np.zeros(4)
        for _ in range(samples):
            counts[bell_difference_sample(psi, g, char_dist=p).index] += 1
        tv = 0.5 * np.abs(counts / samples - q).sum()
        assert tv < 0.02

    def test_identity_probability_is_collision(self):
        g = rng(16)
        psi = qcore.sample_pure_state(4, g)
        p = characteristic_distribution(psi)
        target = float((p**2).sum())
        samples = 60_000
        hits = sum(
            bell_difference_sample(psi, g, char_dist=p).is_identity for _ in range(samples)
        )
        sigma = np.sqrt(target * (1 - target) / samples)
        assert abs(hits / samples - target) < 4 * sigma + 0.01

    def test_random_two_qubit_states_tv(self):
        g = rng(17)
        for _ in range(20):
            psi = qcore.sample_pure_state(4, g)
            p = characteristic_distribution(psi)
            q = np.zeros(16)
            for a in range(16):
                q[a ^ np.arange(16)] += p[a] * p
            idx = g.choice(16, size=(100_000, 2), p=p)
            counts = np.bincount(idx[:, 0] ^ idx[:, 1], minlength=16)
            tv = 0.5 * np.abs(counts / 100_000 - q).sum()
            assert tv < 0.03


class TestPauliMoment:
    def test_eigenstate_deterministic(self):
        g = rng(18)
        psi = basis_state(2, 0)
        z = PauliLabel(1, 0, 1)
        assert all(pauli_moment_sample(psi, z, g) == 1 for _ in range(30))

    def test_x_on_zero_product_mean(self):
        g = rng(19)
        psi = basis_state(2, 0)
        x = PauliLabel(1, 1, 0)
        prods = [2 * pauli_moment_sample(psi, x, g) - 1 for _ in range(10_000)]
        assert abs(np.mean(prods)) < 3 / np.sqrt(10_000) + 0.01

    def test_t_state_product_mean(self):
        g = rng(20)
        psi = t_state()
        x = PauliLabel(1, 1, 0)
        prods = [2 * pauli_moment_sample(psi, x, g) - 1 for _ in range(10_000)]
        assert abs(np.mean(prods) - 0.5) < 3 * np.sqrt(0.75) / np.sqrt(10_000) + 0.01

    def test_unbiased_on_random_pairs(self):
        g = rng(21)
        shots = 4000
        for _ in range(50):
            n = int(g.integers(1, 3))
            psi = qcore.sample_pure_state(2**n, g)
            lab = PauliLabel.from_index(n, int(g.integers(0, 4**n)))
            e = float(pauli_expectations(psi)[lab.index])
            prods = [
                2 * pauli_moment_sample(psi, lab, g, expectation=e) - 1 for _ in range(shots)
            ]
            sigma = np.sqrt(max(1 - e**4, 1e-4) / shots)
            assert abs(np.mean(prods) - e**2) < 4 * sigma + 0.02


class TestCliffordSampling:
    def test_determinism(self):
        a = sample_uniform_clifford(2, rng(30)).entries
        b = sample_uniform_clifford(2, rng(30)).entries
        assert np.array_equal(a, b)

    def test_pauli_conjugation_property(self):
        g = rng(31)
        for n in (1, 2, 3):
            for _ in range(10):
                u = sample_uniform_clifford(n, g).entries
                for idx in range(1, 4**n):
                    w = dense_pauli(PauliLabel.from_index(n, idx))
                    m = u @ w @ u.conj().T
                    overlaps = [
                        np.vdot(dense_pauli(PauliLabel.from_index(n, j)), m).real / 2**n
                        for j in range(4**n)
                    ]
                    best = max(abs(o) for o in overlaps)
                    assert abs(best - 1.0) < 1e-9

    def test_symplectic_samples_preserve_form(self):
        g = rng(32)
        for n in (1, 2, 3):
            omega = np.zeros((2 * n, 2 * n), dtype=np.int8)
            for i in range(n):
                omega[2 * i, 2 * i + 1] = omega[2 * i + 1, 2 * i] = 1
            for _ in range(20):
                s = qmeas.sample_symplectic(n, g)
                assert np.array_equal((s @ omega @ s.T) % 2, omega)

    def test_single_qubit_uniform_chi_square(self):
        g = rng(33)
        x_mat, z_mat = dense_pauli(PauliLabel(1, 1, 0)), dense_pauli(PauliLabel(1, 0, 1))
        paulis = [dense_pauli(PauliLabel.from_index(1, j)) for j in range(4)]

        def key(u):
            out = []
            for w in (x_mat, z_mat):
                m = u @ w @ u.conj().T
                for j in range(1, 4):
                    c = np.vdot(paulis[j], m).real / 2
                    if abs(abs(c) - 1) < 1e-9:
                        out.append((j, c > 0))
                        break
            return tuple(out)

        samples = 100_000
        counts = {}
        for _ in range(samples):
            k = key(sample_uniform_clifford(1, g).entries)
            counts[k] = counts.get(k, 0) + 1
        assert len(counts) == 24
        assert chi_square_pvalue(list(counts.values()), [samples / 24] * 24) > 0.01
