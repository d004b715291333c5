"""Black-box interactive proof for purity testing over a quantum channel.

The verifier alternates uniformly between mixed-test, pure-test and compute
rounds, masking every round with a fresh private unitary. The honest prover
answers each round with pairwise SWAP tests; the verifier aborts on any
failed test round or inconsistent compute answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qcore, qmeas
from .harness import (
    Channel,
    Copy,
    CopyOracle,
    ManyVsOneTask,
    ProtocolAbort,
    ProverStrategy,
    SessionResult,
    derive_rng,
    run_session,
)

PURE = 1
MIXED = 0

OUTPUT_PURE = "pure"
OUTPUT_MIXED = "maximally mixed"

MASK_ENSEMBLES = ("haar", "clifford", "pauli")


@dataclass(frozen=True)
class PurityParams:
    delta: float
    d: int
    N: int
    delta_tilde: float
    m: int
    mask_ensemble: str = "haar"


def purity_params(delta: float, d: int, mask_ensemble: str = "haar") -> PurityParams:
    """Round count, per-round failure budget and SWAP-test copy budget.

    N = ceil(max{72 ln(6/delta), 4 log2(2/delta)}); delta_tilde = delta/(2N).
    m comes from the exact SWAP analysis: maximally mixed copies pass a single
    test with probability (1+1/d)/2, so t = ceil(ln(1/dt)/ln(2/(1+1/d))) tests
    (m = 2t copies) push the wrong-answer probability below delta_tilde; pure
    copies never fail a test.
    """
    if not 0 < delta < 1:
        raise ValueError("delta in (0,1) required")
    if d < 2:
        raise ValueError("d >= 2 required")
    if mask_ensemble not in MASK_ENSEMBLES:
        raise ValueError(f"mask_ensemble must be one of {MASK_ENSEMBLES}")
    n_rounds = math.ceil(max(72 * math.log(6 / delta), 4 * math.log2(2 / delta)))
    delta_tilde = delta / (2 * n_rounds)
    tests = math.ceil(math.log(1 / delta_tilde) / math.log(2 / (1 + 1 / d)))
    return PurityParams(
        delta=delta,
        d=d,
        N=n_rounds,
        delta_tilde=delta_tilde,
        m=2 * tests,
        mask_ensemble=mask_ensemble,
    )


@dataclass
class RoundRecord:
    kind: str  # "m" | "p" | "c"
    mask: qcore.UnitaryOp | None
    prover_answer: int
    pass_flag: int | None  # set for test rounds only


def _sample_mask(ensemble: str, d: int, rng: np.random.Generator) -> qcore.UnitaryOp:
    if ensemble == "haar":
        return qcore.sample_haar_unitary(d, rng)
    n = int(round(math.log2(d)))
    if (1 << n) != d:
        raise ValueError(f"{ensemble} masks need a power-of-two dimension, got {d}")
    if ensemble == "clifford":
        return qmeas.sample_uniform_clifford(n, rng)
    label = qmeas.PauliLabel.from_index(n, int(rng.integers(0, 4**n)))
    return qcore.UnitaryOp(qmeas.dense_pauli(label))


def prepare_round_state(kind: str, oracle_v: CopyOracle, params: PurityParams, rng):
    """Copies for one round, emitted one at a time, plus the private mask.

    Mixed test rounds cost no oracle queries and carry no mask; pure test
    rounds mask |0><0|; compute rounds mask m fresh oracle copies.
    """
    d = params.d
    if kind == "m":
        state = np.eye(d, dtype=complex) / d

        def stream():
            for _ in range(params.m):
                yield Copy(state, tracker=None)

        return stream(), None
    mask = _sample_mask(params.mask_ensemble, d, rng)
    if kind == "p":
        ue = mask.entries
        state = np.outer(ue[:, 0], ue[:, 0].conj())

        def stream():
            for _ in range(params.m):
                yield Copy(state, tracker=None)

        return stream(), mask
    if kind == "c":

        def stream():
            for _ in range(params.m):
                yield oracle_v.query(kind="compute-round").with_unitary(mask)

        return stream(), mask
    raise ValueError(f"unknown round kind {kind}")


def honest_purity_answer(states: list[np.ndarray], rng: np.random.Generator) -> int:
    """PURE iff all m/2 pairwise SWAP tests accept."""
    if len(states) % 2:
        raise ValueError("honest SWAP analysis needs an even number of copies")
    for a, b in zip(states[0::2], states[1::2]):
        if not qmeas.swap_test(a, b, rng):
            return MIXED
    return PURE


def purity_verdict(records: list[RoundRecord]) -> str:
    """Abort on any failed test or inconsistent/missing compute answers."""
    for rec in records:
        if rec.kind in ("m", "p") and rec.pass_flag == 0:
            raise ProtocolAbort(f"failed {rec.kind}-test round")
    compute_answers = [rec.prover_answer for rec in records if rec.kind == "c"]
    if not compute_answers:
        raise ProtocolAbort("no compute round occurred")
    if len(set(compute_answers)) != 1:
        raise ProtocolAbort("inconsistent compute-round answers")
    return OUTPUT_PURE if compute_answers[0] == PURE else OUTPUT_MIXED


class HonestSwapProver(ProverStrategy):
    """Distinguishes pure from maximally mixed via m/2 pairwise SWAP tests."""

    name = "honest-swap"
    honest = True

    def answer_round(self, states, params: PurityParams, rng) -> int:
        return honest_purity_answer(states, rng)


class AlwaysPure(ProverStrategy):
    name = "always-pure"
    honest = False

    def answer_round(self, states, params, rng) -> int:
        return PURE


class AlwaysMixed(ProverStrategy):
    name = "always-mixed"
    honest = False

    def answer_round(self, states, params, rng) -> int:
        return MIXED


class UniformRandomAnswer(ProverStrategy):
    name = "uniform-random"
    honest = False

    def answer_round(self, states, params, rng) -> int:
        return int(rng.integers(0, 2))


class BestEffortLiar(ProverStrategy):
    """Runs the honest SWAP analysis, then inverts its answer on rounds whose
    SWAP-accept fraction sits closer to the mixed/compute prediction
    (1+1/d)/2 than to the pure prediction 1."""

    name = "best-effort-liar"
    honest = False

    def answer_round(self, states, params, rng) -> int:
        accepts = sum(
            qmeas.swap_test(a, b, rng) for a, b in zip(states[0::2], states[1::2])
        )
        frac = accepts / (len(states) // 2)
        honest = PURE if accepts == len(states) // 2 else MIXED
        compute_prediction = (1 + 1 / params.d) / 2
        believes_compute = abs(frac - compute_prediction) <= abs(frac - 1.0)
        return 1 - honest if believes_compute else honest


ADVERSARIES = {
    cls.name: cls for cls in (AlwaysPure, AlwaysMixed, UniformRandomAnswer, BestEffortLiar)
}


class PurityVerifier:
    """Runs Algorithm-style round scheduling and the abort/consistency rule."""

    memory_limit = 1

    def __init__(self, params: PurityParams, kind_seed: int | None = None):
        self.params = params
        # kind_seed decouples round-kind randomness from the session seed so
        # meter structure can be compared across dimensions
        self.kind_seed = kind_seed
        self.extras: dict = {
            "N": params.N,
            "m": params.m,
            "delta_tilde": params.delta_tilde,
            "d": params.d,
            "mask_ensemble": params.mask_ensemble,
        }

    def run(self, session, prover) -> str:
        p = self.params
        rng_kinds = (
            derive_rng(self.kind_seed, "round-kinds")
            if self.kind_seed is not None
            else session.rng("round-kinds")
        )
        rng_mask = session.rng("masks")
        rng_prover = session.rng("prover")
        records: list[RoundRecord] = []
        kinds = ("m", "p", "c")
        for _ in range(p.N):
            kind = kinds[int(rng_kinds.integers(0, 3))]
            round_idx = session.next_round()
            stream, mask = prepare_round_state(kind, session.oracle_v, p, rng_mask)
            received: list[np.ndarray] = []
            for copy in stream:
                received.extend(session.channel.send_qudits("v->p", [copy], round_idx))
            answer = int(prover.answer_round(received, p, rng_prover))
            session.channel.send_bits("p->v", [answer], round_idx)
            if kind == "m":
                pass_flag = 1 if answer == MIXED else 0
            elif kind == "p":
                pass_flag = 1 if answer == PURE else 0
            else:
                pass_flag = None
            records.append(RoundRecord(kind, mask, answer, pass_flag))
        self.extras["compute_rounds"] = sum(1 for r in records if r.kind == "c")
        self.extras["round_kind_counts"] = {
            k: sum(1 for r in records if r.kind == k) for k in kinds
        }
        return purity_verdict(records)


@dataclass
class PurityConfig:
    """Experiment-level configuration; builds sessions, tasks and judges."""

    d: int = 8
    delta: float = 1 / 3
    mask_ensemble: str = "haar"
    record_transcript: bool = False
    kind_seed: int | None = None

    def params(self) -> PurityParams:
        return purity_params(self.delta, self.d, self.mask_ensemble)

    def task(self) -> ManyVsOneTask:
        d = self.d
        return ManyVsOneTask(
            name="purity",
            accept_instance=qcore.maximally_mixed(d),
            reject_sampler=lambda rng: qcore.sample_pure_state(d, rng).density(),
            instance_kind="quantum-state",
            dim=d,
            accept_output=OUTPUT_MIXED,
        )

    def sample_instance(self, which: str, rng: np.random.Generator) -> qcore.DensityMatrix:
        if which == "accept":
            return qcore.maximally_mixed(self.d)
        if which == "reject":
            return qcore.sample_pure_state(self.d, rng).density()
        raise ValueError(f"unknown instance source {which}")

    def run_one(self, hidden, prover: ProverStrategy, seed: int, prover_hidden=None) -> SessionResult:
        verifier = PurityVerifier(self.params(), kind_seed=self.kind_seed)
        oracle_v = CopyOracle(hidden)
        oracle_p = CopyOracle(prover_hidden if prover_hidden is not None else hidden)
        channel = Channel("quantum", record_transcript=self.record_transcript)
        return run_session(verifier, prover, (oracle_v, oracle_p), channel, seed)

    def judge(self, output, hidden) -> bool:
        """Exact validity: the answer must match the hidden instance type."""
        if qcore.purity(hidden) > 1 - 1e-9:
            return output == OUTPUT_PURE
        if np.allclose(hidden.entries, np.eye(self.d) / self.d, atol=1e-9):
            return output == OUTPUT_MIXED
        return True  # outside the promise both answers are valid
