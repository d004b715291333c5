"""Stabilizer-learning IP: exact moment values, loss bounds, enumeration,
brute-force prover, estimator calibration, verdict rule, sessions."""

import math

import numpy as np
import pytest

from ipsim import qcore, qmeas, stab_ip
from ipsim.harness import CopyOracle, ProtocolAbort, batch_rates
from ipsim.stab_ip import (
    STABILIZER_COUNTS,
    HonestBruteForceProver,
    StabConfig,
    StabParams,
    all_fidelities,
    brute_force_best_stabilizer,
    enumerate_stabilizers,
    estimate_A3,
    estimate_stab_loss,
    exact_A3,
    optimal_stab_loss,
    stab_bounds,
    stab_verdict,
    validate_candidate,
)


def t_state():
    return qcore.PureState(np.array([1.0, np.exp(1j * np.pi / 4)]) / np.sqrt(2))


class TestExactMoment:
    def test_computational_basis_states(self):
        for n in (1, 2, 3):
            assert exact_A3(qcore.basis_state(1 << n, 0)) == pytest.approx(1.0, abs=1e-12)

    def test_t_state_exact(self):
        assert exact_A3(t_state()) == pytest.approx(0.625, abs=1e-12)

    def test_range_on_haar_states(self):
        rng = np.random.default_rng(0)
        prev_means = []
        for n in (2, 3):
            vals = [exact_A3(qcore.sample_pure_state(1 << n, rng)) for _ in range(30)]
            assert all(0 < v <= 1 for v in vals)
            prev_means.append(np.mean(vals))
        assert prev_means[1] < prev_means[0]  # decreasing with n on average


class TestBounds:
    def test_exact_stabilizer_bounds(self):
        assert stab_bounds(1.0) == (0.0, 0.0)

    def test_t_state_bounds(self):
        ub, lb = stab_bounds(0.625)
        assert ub == pytest.approx(0.5)
        assert lb == pytest.approx(0.07534, abs=1e-4)
        assert ub / lb <= 8

    def test_ratio_bounded_by_8_full_sweep(self):
        for a in np.linspace(0.001, 0.999, 999):
            ub, lb = stab_bounds(a)
            assert ub / lb <= 8 + 1e-9

    def test_sandwich_on_random_states(self):
        rng = np.random.default_rng(1)
        for n in (2, 3):
            for _ in range(40):
                psi = qcore.sample_pure_state(1 << n, rng)
                ub, lb = stab_bounds(exact_A3(psi))
                l_star, _ = optimal_stab_loss(psi)
                assert lb - 1e-9 <= l_star <= ub + 1e-9


class TestEnumeration:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_counts(self, n):
        assert len(enumerate_stabilizers(n)) == STABILIZER_COUNTS[n]

    def test_count_formula(self):
        for n in (1, 2, 3, 4):
            expected = (1 << n) * math.prod((1 << j) + 1 for j in range(1, n + 1))
            assert STABILIZER_COUNTS[n] == expected

    def test_states_distinct(self):
        tab = stab_ip.stabilizer_amplitude_table(2)
        overlaps = np.abs(tab.conj() @ tab.T) ** 2
        off = overlaps - np.eye(len(tab))
        assert off.max() < 1 - 1e-9  # no duplicated state

    def test_pairwise_fidelity_spectrum_n2(self):
        tab = stab_ip.stabilizer_amplitude_table(2)
        vals = np.unique(np.round(np.abs(tab.conj() @ tab.T) ** 2, 9))
        assert set(vals.tolist()) == {0.0, 0.25, 0.5, 1.0}

    def test_dense_is_plus_one_eigenstate_of_generators(self):
        rng = np.random.default_rng(2)
        states = enumerate_stabilizers(2)
        for idx in rng.choice(len(states), size=25, replace=False):
            desc = states[idx]
            amps = desc.dense.amplitudes
            for packed, sign in desc.packed_rows():
                w = qmeas.dense_pauli(stab_ip._pauli_from_packed(2, packed))
                signed = (-1) ** sign * w
                assert np.abs(signed @ amps - amps).max() < 1e-9

    def test_generator_validation(self):
        desc = enumerate_stabilizers(2)[7]
        desc.validate_group()
        bad = desc.generators.copy()
        bad[1] = bad[0]  # dependent rows
        with pytest.raises(ProtocolAbort):
            validate_candidate(bad, 2)


class TestBruteForce:
    def test_stabilizer_input_returns_itself(self):
        rng = np.random.default_rng(3)
        states = enumerate_stabilizers(2)
        psi = states[17].dense
        oracle = CopyOracle(psi, ideal_access=True)
        best = brute_force_best_stabilizer(oracle, StabParams(0.4, 1 / 3, 2), rng)
        assert abs(qcore.fidelity_pure(psi, best.projector()) - 1.0) < 1e-9

    def test_t_state_best_loss(self):
        oracle = CopyOracle(t_state(), ideal_access=True)
        best = brute_force_best_stabilizer(oracle, StabParams(0.4, 1 / 3, 1), np.random.default_rng(0))
        loss = 1 - qcore.fidelity_pure(t_state(), best.projector())
        assert loss == pytest.approx(1 - (2 + math.sqrt(2)) / 4, abs=1e-9)

    def test_random_state_matches_exhaustive_judge(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            psi = qcore.sample_pure_state(4, rng)
            oracle = CopyOracle(psi, ideal_access=True)
            best = brute_force_best_stabilizer(oracle, StabParams(0.4, 1 / 3, 2), rng)
            loss = 1 - qcore.fidelity_pure(psi, best.projector())
            l_star, _ = optimal_stab_loss(psi)
            assert loss == pytest.approx(l_star, abs=1e-9)

    def test_sampled_mode_near_optimal(self):
        p = StabParams(0.4, 1 / 3, 2, mode="sampled")
        rng = np.random.default_rng(5)
        hits = 0
        for i in range(30):
            psi = qcore.sample_pure_state(4, rng)
            oracle = CopyOracle(psi, ideal_access=True)
            best = brute_force_best_stabilizer(oracle, p, np.random.default_rng(i))
            loss = 1 - qcore.fidelity_pure(psi, best.projector())
            l_star, _ = optimal_stab_loss(psi)
            if loss <= l_star + p.eps1:
                hits += 1
        assert hits / 30 >= 1 - p.delta1


class TestEstimators:
    def test_loss_shots_formula(self):
        # spec example: eps2 = 0.1, delta2 = 1/9 -> ceil(ln 18 / 0.02) = 145
        p = StabParams(epsilon=0.5, delta=1 / 3, n=2)
        assert p.eps2 == pytest.approx(0.1)
        assert p.delta2 == pytest.approx(1 / 9)
        assert p.loss_shots() == 145

    def test_loss_estimate_concentrates(self):
        p = StabParams(0.4, 1 / 3, 2)
        states = enumerate_stabilizers(2)
        psi = states[3].dense
        oracle = CopyOracle(psi)
        l_hat = estimate_stab_loss(oracle, states[3], p, np.random.default_rng(0))
        assert l_hat <= p.eps2 + 0.05
        assert oracle.meter.total == p.loss_shots()
        # orthogonal candidate: loss near 1
        fids = all_fidelities(psi)
        worst = states[int(np.argmin(fids))]
        l_hat = estimate_stab_loss(CopyOracle(psi), worst, p, np.random.default_rng(1))
        assert l_hat >= 1 - fids.min() - 0.05

    def test_primitive_estimator_identity_calibration(self):
        """The Bell-difference composition mean equals the exact moment."""
        rng = np.random.default_rng(6)
        for n in (1, 2):
            for _ in range(10):
                psi = qcore.sample_pure_state(1 << n, rng)
                exps = qmeas.pauli_expectations(psi)
                p_char = qmeas.characteristic_distribution(psi)
                q = np.zeros_like(p_char)
                for a in range(p_char.size):
                    q[a ^ np.arange(p_char.size)] += p_char[a] * p_char
                composed_mean = float((q * exps**2).sum())
                assert composed_mean == pytest.approx(exact_A3(psi), abs=1e-12)

    def test_sampled_a3_estimate_concentrates(self):
        p = StabParams(0.4, 1 / 3, 2, mode="sampled")
        hits = 0
        runs = 50
        for i in range(runs):
            rng = np.random.default_rng(700 + i)
            psi = qcore.sample_pure_state(4, rng)
            oracle = CopyOracle(psi, ideal_access=True)
            a_hat = estimate_A3(oracle, p, rng)
            assert oracle.meter.total == 6 * p.a3_samples()
            if abs(a_hat - exact_A3(psi)) <= p.eps3:
                hits += 1
        assert hits / runs >= (1 - p.delta3) - 0.05

    def test_ideal_a3_meter(self):
        p = StabParams(epsilon=0.4, delta=1 / 3, n=2)
        assert p.eps3 == pytest.approx(0.06)
        oracle = CopyOracle(t_state(), ideal_access=True)
        # t-state has n=1; rebuild params accordingly
        p1 = StabParams(epsilon=0.4, delta=1 / 3, n=1)
        estimate_A3(oracle, p1, np.random.default_rng(0))
        assert oracle.meter.total == 6 * p1.a3_samples()


class TestVerdict:
    def test_trivial_accept(self):
        assert stab_verdict(0.0, 1.0, 0.5)

    def test_bad_loss_rejected(self):
        assert not stab_verdict(1.0, 1.0, 0.4)  # 1 > 0 + 0.24

    def test_zero_moment_accepts_anything(self):
        assert stab_verdict(1.0, 0.0, 0.1)  # u_hat = 1, always accepted


class TestSessions:
    def test_honest_completeness(self):
        cfg = StabConfig()
        rec, results = batch_rates(
            cfg.run_one,
            cfg.judge,
            lambda r: cfg.sample_instance("x", r),
            HonestBruteForceProver(),
            trials=60,
            seed=71,
        )
        assert rec.accept_and_valid / 60 >= 2 / 3
        assert rec.accept_and_invalid == 0

    def test_adversaries(self):
        cfg = StabConfig()
        for name, cls in stab_ip.ADVERSARIES.items():
            rec, _ = batch_rates(
                cfg.run_one,
                cfg.judge,
                lambda r: cfg.sample_instance("x", r),
                cls(),
                trials=40,
                seed=72,
            )
            assert rec.accept_and_invalid / 40 < 1 / 3, name

    def test_soundness_chain_on_accepted_runs(self):
        """Accepted runs with in-tolerance estimates satisfy l <= 8 l* + eps."""
        cfg = StabConfig(n=2)
        checked = 0
        for i in range(60):
            rng = np.random.default_rng(7000 + i)
            hidden = cfg.sample_instance("x", rng)
            res = cfg.run_one(hidden, HonestBruteForceProver(), seed=9000 + i)
            if not res.accepted:
                continue
            est = res.extras["estimates"]
            loss = 1 - qcore.fidelity_pure(hidden, res.output.projector())
            l_star, _ = optimal_stab_loss(hidden)
            p = cfg.params()
            if abs(est["a_hat"] - exact_A3(hidden)) <= p.eps3 and abs(est["l_hat"] - loss) <= p.eps2:
                assert loss <= 8 * l_star + cfg.epsilon + 1e-9
                checked += 1
        assert checked >= 30

    def test_sampled_mode_session(self):
        cfg = StabConfig(n=2, mode="sampled")
        res = cfg.run_one(cfg.sample_instance("x", np.random.default_rng(1)), HonestBruteForceProver(), seed=11)
        assert res.accepted
