"""Brute-force verifiers independent of the simulation pipeline.

Nothing here goes through the analysis shortcuts it is meant to check: the
classical bound is found by enumeration, basis checks use dense matrices,
and the local-model search builds distributions from explicit response
tables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .analysis import TETRAHEDRON, star_statistics
from .protocols import (
    EJM_OUTCOME_LABELS,
    CommNetSettings,
    bsm_decoding,
    build_ejm_measurement,
    commnet_winning_outcome,
    ejm_state,
    ghz_basis_state,
)
from .simcore import Circuit, StateVector, run_circuit


class VerificationError(AssertionError):
    def __init__(self, report):
        super().__init__("; ".join(report.mismatches))
        self.report = report


# ---------------------------------------------------------------------------
# classical communication strategies

@dataclass
class ClassicalCommNetStrategy:
    """Node k sends ``messages[k][2*x_k + y_k]``; the decoder maps the message
    tuple (as an integer, node 1 = MSB) to the output index."""

    messages: Sequence[Sequence[int]]
    decoder: Sequence[int]

    def __post_init__(self):
        n = len(self.messages)
        if any(len(m) != 4 for m in self.messages):
            raise ValueError("each message map needs 4 entries")
        if len(self.decoder) != 1 << n:
            raise ValueError(f"decoder needs {1 << n} entries")


def _commnet_tables(n: int):
    """Per-setting node inputs 2*x_k + y_k, shape (4^n, n), and winning outcomes."""
    settings = [CommNetSettings.from_index(n, i) for i in range(4**n)]
    inputs = np.array([[2 * s.x[k] + s.y[k] for k in range(n)] for s in settings])
    wins = np.array([commnet_winning_outcome(s) for s in settings])
    return inputs, wins


def commnet_strategy_pwin(strategy: ClassicalCommNetStrategy) -> Fraction:
    n = len(strategy.messages)
    inputs, wins = _commnet_tables(n)
    hits = 0
    for row, win in zip(inputs, wins):
        tup = 0
        for k, inp in enumerate(row):
            tup = (tup << 1) | strategy.messages[k][inp]
        hits += int(strategy.decoder[tup] == win)
    return Fraction(hits, 4**n)


def _all_message_maps() -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=4)))


def brute_force_commnet_classical(n: int) -> Fraction:
    """Best classical winning probability over deterministic one-bit strategies.

    n = 2 enumerates every (message maps, decoder) pair. n = 3 enumerates the
    message maps and takes the best decoder per message tuple, which is exact
    because the score is additive over tuples.
    """
    if n not in (2, 3):
        raise ValueError(f"exhaustive search supports n = 2 or 3, got {n}")
    inputs, wins = _commnet_tables(n)
    maps = _all_message_maps()  # (16, 4)
    profiles = np.array(list(itertools.product(range(16), repeat=n)))  # (16^n, n)
    # message tuple per (profile, setting)
    tuples = np.zeros((len(profiles), len(inputs)), dtype=np.int64)
    for k in range(n):
        tuples = (tuples << 1) | maps[profiles[:, k]][:, inputs[:, k]]
    n_out = 1 << n
    if n == 2:
        decoders = np.array(list(itertools.product(range(n_out), repeat=n_out)))  # (256, 4)
        best = 0
        for row in tuples:
            hits = (decoders[:, row] == wins[None, :]).sum(axis=1)
            best = max(best, int(hits.max()))
        return Fraction(best, 4**n)
    keys = tuples * n_out + wins[None, :]
    offsets = np.arange(len(profiles))[:, None] * (n_out * n_out)
    table = np.bincount((keys + offsets).ravel(), minlength=len(profiles) * n_out * n_out)
    table = table.reshape(len(profiles), n_out, n_out)
    best = int(table.max(axis=2).sum(axis=1).max())
    return Fraction(best, 4**n)


# ---------------------------------------------------------------------------
# measurement bases

@dataclass
class BasisReport:
    name: str
    gram_deviation: float
    resolution_deviation: float
    decode_min_prob: float
    extra: dict = field(default_factory=dict)
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _decode_probs(states: np.ndarray, decoder: Circuit) -> np.ndarray:
    """probs[k, j]: readout j after running ``decoder`` on state k."""
    out = []
    for psi in states:
        final = run_circuit(decoder, StateVector(decoder.num_qubits, psi.astype(complex)))
        out.append(final.probabilities())
    return np.array(out)


def _check(report: BasisReport, tol: float, strict: bool) -> BasisReport:
    if report.gram_deviation > tol:
        report.mismatches.append(f"{report.name}: Gram deviation {report.gram_deviation:.3g}")
    if report.resolution_deviation > tol:
        report.mismatches.append(f"{report.name}: completeness deviation {report.resolution_deviation:.3g}")
    if 1 - report.decode_min_prob > tol:
        report.mismatches.append(f"{report.name}: decode probability {report.decode_min_prob:.12f}")
    if strict and report.mismatches:
        raise VerificationError(report)
    return report


def verify_ghz_basis(n: int, tol: float = 1e-10, strict: bool = True) -> BasisReport:
    if not 2 <= n <= 6:
        raise ValueError(f"n must be in [2, 6], got {n}")
    labels = list(itertools.product((0, 1), repeat=n))
    states = np.array([ghz_basis_state(b) for b in labels])
    gram = states.conj() @ states.T
    resolution = states.T @ states.conj()
    probs = _decode_probs(states, Circuit(n, bsm_decoding(list(range(n)))))
    report = BasisReport(
        f"GHZ basis n={n}",
        float(np.abs(gram - np.eye(len(labels))).max()),
        float(np.abs(resolution - np.eye(len(labels))).max()),
        float(np.diag(probs).min()),
    )
    return _check(report, tol, strict)


def reduced_states(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-qubit reduced density matrices of a two-qubit pure state."""
    m = psi.reshape(2, 2)
    return m @ m.conj().T, m.T @ m.conj()


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("ij,kji->k", rho, _PAULI))


def verify_ejm_basis(tol: float = 1e-10, strict: bool = True) -> BasisReport:
    """Orthonormality, equal entanglement, decode and vertex labelling of the EJM."""
    states = np.array([ejm_state(k) for k in range(4)])
    gram = states.conj() @ states.T
    resolution = states.T @ states.conj()
    probs = _decode_probs(states, Circuit(2, build_ejm_measurement((0, 1))))
    spectra = []
    vertex_dev = 0.0
    for k, psi in enumerate(states):
        r1, r2 = reduced_states(psi)
        spectra.append(np.linalg.eigvalsh(r1))
        spectra.append(np.linalg.eigvalsh(r2))
        m = TETRAHEDRON[EJM_OUTCOME_LABELS[k] - 1]
        vertex_dev = max(
            vertex_dev,
            float(np.abs(bloch_vector(r2) - m / 2).max()),
            float(np.abs(bloch_vector(r1) + m / 2).max()),
        )
    spectra = np.array(spectra)
    report = BasisReport(
        "EJM basis",
        float(np.abs(gram - np.eye(4)).max()),
        float(np.abs(resolution - np.eye(4)).max()),
        float(np.diag(probs).min()),
        extra={"marginal_spectrum": spectra[0].tolist(), "vertex_deviation": vertex_dev},
    )
    spread = float(np.abs(spectra - spectra[0]).max())
    report.extra["spectrum_spread"] = spread
    if spread > tol:
        report.mismatches.append(f"EJM basis: marginal spectra differ by {spread:.3g}")
    if vertex_dev > tol:
        report.mismatches.append(f"EJM basis: vertex labelling off by {vertex_dev:.3g}")
    return _check(report, tol, strict)


# ---------------------------------------------------------------------------
# source-independent local models of the star network

@dataclass
class LocalStrategy:
    """Source i emits lambda_i with weights ``weights[i]``; branch i answers
    ``responses[i][x_i, lambda_i]``; the centre answers ``central[lambda_1, ..., lambda_n]``
    (an integer b, b_1 = MSB)."""

    weights: list[np.ndarray]
    responses: list[np.ndarray]
    central: np.ndarray

    @property
    def n(self) -> int:
        return len(self.weights)

    def distributions(self) -> np.ndarray:
        """p[x, (a, b)] for every setting x (x_1 = MSB)."""
        n = self.n
        sizes = [len(w) for w in self.weights]
        joint_w = np.ones(())
        for w in self.weights:
            joint_w = np.multiply.outer(joint_w, w)
        p = np.zeros((1 << n, 1 << (2 * n)))
        lam = np.indices(sizes).reshape(n, -1)  # (n, L)
        wflat = joint_w.reshape(-1)
        bflat = self.central.reshape(-1)
        for x in range(1 << n):
            xbits = [(x >> (n - 1 - i)) & 1 for i in range(n)]
            a = np.zeros(lam.shape[1], dtype=np.int64)
            for i in range(n):
                a = (a << 1) | self.responses[i][xbits[i], lam[i]]
            np.add.at(p[x], (a << n) | bflat, wflat)
        return p


def random_local_strategy(n: int, rng: np.random.Generator, max_values: int = 4) -> LocalStrategy:
    sizes = rng.integers(1, max_values + 1, size=n)
    weights = [rng.dirichlet(np.ones(s)) for s in sizes]
    responses = [rng.integers(0, 2, size=(2, s)) for s in sizes]
    central = rng.integers(0, 1 << n, size=tuple(sizes))
    return LocalStrategy(weights, responses, central)


def constant_local_strategy(n: int) -> LocalStrategy:
    return LocalStrategy(
        [np.ones(1)] * n,
        [np.zeros((2, 1), dtype=np.int64)] * n,
        np.zeros((1,) * n, dtype=np.int64),
    )


def lhv_star_search(n: int, trials: int, seed: int) -> float:
    """Largest S_N seen over ``trials`` random source-independent local models."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(trials):
        strat = random_local_strategy(n, rng)
        best = max(best, star_statistics(list(strat.distributions()), n).S)
    return float(best)
