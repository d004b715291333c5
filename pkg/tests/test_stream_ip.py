"""Streaming uniformity IP: field arithmetic cross-checks, multilinear
extension updates, interpolation, sum-check mechanics, range certificate,
memory/communication instrumentation."""

import math

import numpy as np
import pytest

from ipsim import m61, stream_ip
from ipsim.m61 import Q, fadd, fmul, fsub, lagrange_eval, lagrange_weights
from ipsim.stream_ip import (
    HonestStreamProver,
    StreamVerifierState,
    UniformityConfig,
    chi_table_for_point,
    lagrange_h_eval,
    multilinear_point_update,
    range_certificate,
    uniformity_params,
    uniformity_verdict,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestFieldArithmetic:
    def test_vector_ops_match_scalar_reference(self):
        g = rng(1)
        a = np.array([m61.rand_fe(g) for _ in range(512)], dtype=np.uint64)
        b = np.array([m61.rand_fe(g) for _ in range(512)], dtype=np.uint64)
        vm, va, vs = m61.vmul(a, b), m61.vadd(a, b), m61.vsub(a, b)
        for i in range(0, 512, 13):
            x, y = int(a[i]), int(b[i])
            assert int(vm[i]) == (x * y) % Q
            assert int(va[i]) == (x + y) % Q
            assert int(vs[i]) == (x - y) % Q

    def test_edge_values(self):
        edge = [0, 1, 2, Q - 1, Q - 2, (1 << 31) - 1, 1 << 31, (1 << 60) + 7]
        arr = np.array(edge, dtype=np.uint64)
        for y in edge:
            out = m61.vmul(arr, np.uint64(y))
            for i, x in enumerate(edge):
                assert int(out[i]) == (x * y) % Q

    def test_vsum_matches_int_sum(self):
        g = rng(2)
        for size in (1, 2, 5, 63, 64, 1000):
            a = np.array([m61.rand_fe(g) for _ in range(size)], dtype=np.uint64)
            assert m61.vsum(a) == sum(int(x) for x in a) % Q

    def test_inverse(self):
        g = rng(3)
        for _ in range(20):
            x = m61.rand_fe(g)
            if x:
                assert fmul(x, m61.finv(x)) == 1

    def test_canonical_representative(self):
        assert m61.fe(Q) == 0
        assert m61.fe(-1) == Q - 1


class TestLagrange:
    def test_node_values(self):
        vals = [1 if i == 1 else 0 for i in range(5)]
        w = lagrange_weights(5)
        assert lagrange_h_eval(vals, 1, w) == 1
        assert lagrange_h_eval(vals, 3, w) == 0

    def test_matches_naive_interpolation(self):
        g = rng(4)
        for _ in range(10):
            length = int(g.integers(3, 9))
            vals = [m61.rand_fe(g) for _ in range(length)]
            t = m61.rand_fe(g)
            w = lagrange_weights(length)
            naive = 0
            for j, y in enumerate(vals):
                term = y
                for i in range(length):
                    if i != j:
                        term = fmul(term, fmul(fsub(t, i), m61.finv(fsub(j, i))))
                naive = fadd(naive, term)
            assert lagrange_eval(vals, t, w) == naive

    def test_degree_d_interpolant_at_d_plus_values(self):
        # D=4, integer point 7 beyond the nodes
        vals = [1 if i == 1 else 0 for i in range(5)]
        w = lagrange_weights(5)
        direct = lagrange_eval(vals, 7, w)
        # ell_1(7) = prod_{i != 1(7-i)} / prod_{i != 1}(1-i)
        num = 1
        den = 1
        for i in (0, 2, 3, 4):
            num = fmul(num, fsub(7, i))
            den = fmul(den, fsub(1, i))
        assert direct == fmul(num, m61.finv(den))


class TestVerifierState:
    def test_empty_stream_is_zero(self):
        st = StreamVerifierState(16, rng(5))
        assert st.a_at_r == 0 and st.a_at_r2 == 0

    def test_single_sample_all_zero_point(self):
        st = StreamVerifierState(16, rng(6))
        st.r = [0, 0, 0, 0]
        multilinear_point_update(st, 0)
        assert st.a_at_r == 1  # chi_0(0) = 1

    def test_matches_dense_extension_oracle(self):
        g = rng(7)
        k = 256
        st = StreamVerifierState(k, g)
        samples = g.integers(0, k, size=1000)
        for s in samples:
            st.update(int(s))
        freq = np.bincount(samples, minlength=k)
        # dense oracle: sum_i freq_i chi_i(r) using the chi table
        table = chi_table_for_point(k, st.r)
        expected = 0
        for i in range(k):
            if freq[i]:
                expected = fadd(expected, fmul(int(freq[i]), int(table[i])))
        assert st.a_at_r == expected

    def test_batch_equals_sequential(self):
        g = rng(8)
        k = 64
        samples = g.integers(0, k, size=500)
        seq = StreamVerifierState(k, rng(9))
        bat = StreamVerifierState(k, rng(9))
        for s in samples:
            seq.update(int(s))
        bat.update_batch(samples)
        assert (seq.a_at_r, seq.a_at_r2) == (bat.a_at_r, bat.a_at_r2)
        assert seq.sample_count == bat.sample_count
        assert seq.register_count == bat.register_count

    def test_out_of_range_rejected(self):
        st = StreamVerifierState(16, rng(10))
        with pytest.raises(ValueError):
            st.update(16)


class TestParams:
    def test_full_scale_values(self):
        p = uniformity_params(1 << 16, 0.75)
        assert p.n == 63_716
        assert p.tau == pytest.approx(0.30988, abs=2e-5)
        assert p.threshold_count == pytest.approx(19_744.4, abs=1.0)

    def test_epsilon_boundary_accepted(self):
        uniformity_params(1 << 16, 12 / (1 << 16) ** 0.25)  # exactly the bound

    def test_epsilon_below_bound_rejected(self):
        with pytest.raises(ValueError):
            uniformity_params(1 << 16, 0.7)

    def test_mechanics_waiver(self):
        p = uniformity_params(256, 0.5, allow_small_epsilon=True)
        assert p.n == math.ceil(140 * 16 / 0.25)

    def test_verdict_rule(self):
        assert uniformity_verdict(24_000, 19_744.4) == "uniform"
        assert uniformity_verdict(27, 19_744.4) == "not uniform"


class TestSumcheckMechanics:
    def _cfg(self):
        return UniformityConfig(k=256, epsilon=0.9, degree_cap=32, allow_small_epsilon=True)

    def test_totals_equal_brute_force_on_random_streams(self):
        cfg = self._cfg()
        for i in range(100):
            res = cfg.run_one(cfg.make_distribution("uniform"), HonestStreamProver(), seed=3000 + i)
            assert res.accepted, res.abort_reason
            # claimed-and-verified Z equals the brute-force unique count of
            # the last attempt's stream (replayed from the same derived rng)
            p = cfg.params()
            from ipsim.harness import derive_rng

            stream_rng = derive_rng(res.seed, "stream")
            for _ in range(res.extras["attempts"]):
                samples = cfg.make_distribution("uniform").draw_batch(stream_rng, p.n)
            z_brute = int((np.bincount(samples, minlength=cfg.k) == 1).sum())
            assert res.extras["z_verified"] == z_brute

    def test_zero_length_stream_claim_zero(self):
        # engine-level: empty table sums to 0 and verifies against claim 0
        freq = np.zeros(16, dtype=np.uint64)
        st = StreamVerifierState(16, rng(11))
        eng = stream_ip._SumcheckEngine(freq, 4, "unique")

        def rounds(j, r_prev):
            if r_prev is not None:
                eng.bind(r_prev)
            return eng.round_message()

        h_values = [1 if i == 1 else 0 for i in range(5)]
        out = stream_ip.run_sumcheck(
            0,
            rounds,
            st.r,
            6,
            lambda: lagrange_h_eval(h_values, st.a_at_r, list(lagrange_weights(5))),
        )
        assert out.verified

    def test_shift_liar_rejected_every_time(self):
        cfg = UniformityConfig(k=16, epsilon=0.9, degree_cap=8, allow_small_epsilon=True)
        for i in range(200):
            res = cfg.run_one(
                cfg.make_distribution("uniform"), stream_ip.ShiftClaimProver(), seed=4000 + i
            )
            assert not res.accepted
            assert "sum-check rejected" in res.abort_reason

    def test_engine_bucketed_equals_direct(self):
        g = rng(12)
        freq = g.integers(0, 5, size=2048).astype(np.uint64)
        a = stream_ip._SumcheckEngine(freq.copy(), 8, "unique")
        msg_bucketed = a.round_message()  # large table: bucket path kicks in
        b = stream_ip._SumcheckEngine(freq.copy(), 8, "unique")
        direct = b._evaluate(b.table[0::2], m61.vsub(b.table[1::2], b.table[0::2]))
        assert list(msg_bucketed.evaluations) == direct
        assert len(msg_bucketed) == msg_bucketed.degree_bound + 2


class TestRangeCertificate:
    def test_in_cap_table_passes(self):
        g = rng(13)
        k = 64
        freq = g.integers(0, 4, size=k).astype(np.uint64)
        st = StreamVerifierState(k, rng(14))
        samples = np.repeat(np.arange(k), freq.astype(np.int64))
        st.update_batch(samples)
        assert range_certificate(freq, 8, st).verified

    def test_planted_over_cap_frequency_rejected(self):
        # honest-looking prover clamps the planted frequency and claims 0;
        # rejected in every one of many trials
        cfg = UniformityConfig(
            k=64, epsilon=0.9, degree_cap=4, distribution="point_mass", allow_small_epsilon=True
        )
        rejected = 0
        trials = 300
        for i in range(trials):
            res = cfg.run_one(
                cfg.make_distribution("point_mass"), stream_ip.RangeClampProver(), seed=5000 + i
            )
            if not res.accepted:
                rejected += 1
        assert rejected == trials

    def test_no_cap_passes_trivially(self):
        g = rng(15)
        k = 16
        n_small = 8
        samples = g.integers(0, k, size=n_small)
        freq = np.bincount(samples, minlength=k).astype(np.uint64)
        st = StreamVerifierState(k, rng(16))
        st.update_batch(samples)
        assert range_certificate(freq, n_small, st).verified  # D = n

    def test_widening_path(self):
        # max frequency slightly above the initial cap: honest prover flags,
        # verifier widens and the session completes
        cfg = UniformityConfig(
            k=256,
            epsilon=1.0,
            degree_cap=8,
            distribution="support_fraction",
            support_fraction=0.5,
            allow_small_epsilon=True,
        )
        completed = 0
        widened = 0
        for i in range(10):
            res = cfg.run_one(
                cfg.sample_instance("x", rng(i)), HonestStreamProver(), seed=6000 + i
            )
            if res.accepted:
                completed += 1
                if res.extras["attempts"] > 1:
                    widened += 1
        assert completed == 10
        assert widened == 10  # lambda = 17.5 per cell always exceeds cap 8


class TestInstrumentation:
    def test_memory_budget(self):
        for k in (16, 256, 1 << 16):
            st = StreamVerifierState(k, rng(17))
            b = k.bit_length() - 1
            assert st.peak_field_elements <= 4 * b + 16

    def test_communication_budget_full_scale(self):
        cfg = UniformityConfig()
        res = cfg.run_one(cfg.make_distribution("uniform"), HonestStreamProver(), seed=77)
        assert res.accepted
        assert res.extras["prover_field_elements"] <= 1200
        expected = 16 * (32 + 2) + 16 * (32 + 3) + 1
        assert res.extras["prover_field_elements"] == expected

    def test_classical_channel_no_qudits(self):
        cfg = UniformityConfig(k=256, epsilon=0.9, allow_small_epsilon=True, degree_cap=16)
        res = cfg.run_one(cfg.make_distribution("uniform"), HonestStreamProver(), seed=1)
        ch = res.channel_counters
        assert ch["qudits_v_to_p"] == 0 and ch["qudits_p_to_v"] == 0
