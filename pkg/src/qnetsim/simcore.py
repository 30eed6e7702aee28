"""State-vector simulation kernels, outcome distributions, noise and sampling.

Qubit ``q`` of an ``n``-qubit register is axis ``q`` of the ``(2,) * n``
amplitude tensor, i.e. qubit 0 is the most significant bit of the flat index.
Outcome strings follow the order of ``Circuit.measured_qubits`` and are
MSB-first as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 24

# max amplitudes held at once by the batched trajectory simulator
_BATCH_BUDGET = 1 << 22

_SQRT1_2 = 1.0 / np.sqrt(2.0)

ONE_QUBIT_KINDS = ("H", "X", "Y", "Z", "S", "Sdg", "T", "Tdg", "Rz")
TWO_QUBIT_KINDS = ("CNOT", "CRz")
PARAMETRIC_KINDS = ("Rz", "CRz")


class DimensionError(ValueError):
    """Requested register size is outside the supported range."""


def _diag_phase(kind: str, theta: float | None) -> complex | None:
    # phase on |1> for the diagonal single-qubit gates; None if not diagonal
    if kind == "Z":
        return -1.0
    if kind == "S":
        return 1j
    if kind == "Sdg":
        return -1j
    if kind == "T":
        return np.exp(1j * np.pi / 4)
    if kind == "Tdg":
        return np.exp(-1j * np.pi / 4)
    if kind in ("Rz", "CRz"):
        return np.exp(1j * theta)
    return None


_ONE_QUBIT_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
}


@dataclass(frozen=True)
class Gate:
    """A gate application.

    ``Rz(theta)`` follows the phase-gate convention ``diag(1, e^{i theta})``
    so that ``Rz(pi/2) == S``; ``CRz(theta)`` is the corresponding controlled
    phase with ``targets = (control, target)``. ``CNOT`` likewise takes
    ``(control, target)``.
    """

    kind: str
    targets: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind in ONE_QUBIT_KINDS:
            arity = 1
        elif self.kind in TWO_QUBIT_KINDS:
            arity = 2
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got targets {self.targets}")
        if len(set(self.targets)) != arity:
            raise ValueError(f"{self.kind} targets must be distinct, got {self.targets}")
        if any(t < 0 for t in self.targets):
            raise IndexError(f"negative qubit index in {self.targets}")
        if (self.kind in PARAMETRIC_KINDS) != (self.theta is not None):
            raise ValueError(f"{self.kind}: theta must be given exactly for Rz/CRz")

    @property
    def arity(self) -> int:
        return len(self.targets)

    def matrix(self) -> np.ndarray:
        """Dense unitary (2x2 or 4x4, first target = most significant bit)."""
        if self.kind in _ONE_QUBIT_MATRICES:
            return _ONE_QUBIT_MATRICES[self.kind].copy()
        if self.kind == "CNOT":
            m = np.eye(4, dtype=complex)
            m[2:, 2:] = _ONE_QUBIT_MATRICES["X"]
            return m
        phase = _diag_phase(self.kind, self.theta)
        if self.kind == "CRz":
            return np.diag([1, 1, 1, phase]).astype(complex)
        return np.diag([1, phase]).astype(complex)

    def inverse(self) -> "Gate":
        inv = {"S": "Sdg", "Sdg": "S", "T": "Tdg", "Tdg": "T"}
        if self.kind in inv:
            return Gate(inv[self.kind], self.targets)
        if self.kind in PARAMETRIC_KINDS:
            return Gate(self.kind, self.targets, -self.theta)
        return self


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)
    measured_qubits: list[int] | None = None

    def __post_init__(self):
        if self.measured_qubits is None:
            self.measured_qubits = list(range(self.num_qubits))
        self.measured_qubits = [int(q) for q in self.measured_qubits]

    def add(self, kind: str, *targets: int, theta: float | None = None) -> "Circuit":
        self.gates.append(Gate(kind, targets, theta))
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        self.gates.extend(gates)
        return self

    def validate(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise DimensionError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        for g in self.gates:
            if max(g.targets) >= self.num_qubits:
                raise IndexError(f"{g.kind}{g.targets} out of range for {self.num_qubits} qubits")
        mq = self.measured_qubits
        if len(set(mq)) != len(mq):
            raise ValueError(f"measured qubits must be distinct, got {mq}")
        if any(not 0 <= q < self.num_qubits for q in mq):
            raise IndexError(f"measured qubit out of range: {mq}")


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise DimensionError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def tensor(self) -> np.ndarray:
        """Writable ``(2,) * n`` view of the amplitudes."""
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class OutcomeDistribution:
    num_bits: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (1 << self.num_bits,):
            raise DimensionError(f"expected {1 << self.num_bits} probabilities, got {self.probs.shape}")

    def tensor(self) -> np.ndarray:
        return self.probs.reshape((2,) * self.num_bits)

    def marginal(self, bits: Sequence[int]) -> "OutcomeDistribution":
        """Marginal over the listed bit positions, kept in the listed order."""
        bits = list(bits)
        rest = tuple(i for i in range(self.num_bits) if i not in bits)
        p = self.tensor().sum(axis=rest) if rest else self.tensor()
        order = sorted(bits)
        p = np.transpose(p, [order.index(b) for b in bits])
        return OutcomeDistribution(len(bits), p.reshape(-1))

    def __getitem__(self, outcome: str) -> float:
        return float(self.probs[int(outcome, 2)])


@dataclass
class Counts:
    num_bits: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)

    @property
    def shots(self) -> int:
        return int(self.values.sum())

    def frequencies(self) -> np.ndarray:
        return self.values / self.shots

    def to_dict(self) -> dict[str, int]:
        nz = np.flatnonzero(self.values)
        return {format(int(i), f"0{self.num_bits}b"): int(self.values[i]) for i in nz}

    @classmethod
    def from_dict(cls, data: dict[str, int], num_bits: int | None = None) -> "Counts":
        if num_bits is None:
            num_bits = len(next(iter(data)))
        values = np.zeros(1 << num_bits, dtype=np.int64)
        for key, c in data.items():
            if len(key) != num_bits:
                raise ValueError(f"outcome {key!r} is not a {num_bits}-bit string")
            values[int(key, 2)] = c
        return cls(num_bits, values)

    def __getitem__(self, outcome: str) -> int:
        return int(self.values[int(outcome, 2)])


@dataclass
class NoiseModel:
    """Readout confusion plus stochastic Pauli insertion.

    ``readout`` is either a single ``(p01, p10)`` pair applied to every qubit
    or a per-qubit sequence of pairs; ``p01`` is P(read 1 | true 0).
    """

    readout: tuple[float, float] | list[tuple[float, float]] | None = None
    p1: float = 0.0
    p2: float = 0.0
    trajectories: int = 1

    def __post_init__(self):
        if self.readout is not None:
            arr = np.asarray(self.readout, dtype=float)
            if arr.shape == (2,):
                self.readout = (float(arr[0]), float(arr[1]))
            elif arr.ndim == 2 and arr.shape[1] == 2:
                self.readout = [(float(a), float(b)) for a, b in arr]
            else:
                raise ValueError(f"readout must be a pair or a list of pairs, got {self.readout!r}")
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError("readout probabilities must lie in [0, 1]")
        for name in ("p1", "p2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")

    @property
    def has_pauli(self) -> bool:
        return self.p1 > 0 or self.p2 > 0

    @property
    def has_readout(self) -> bool:
        if self.readout is None:
            return False
        pairs = [self.readout] if isinstance(self.readout, tuple) else self.readout
        return any(a > 0 or b > 0 for a, b in pairs)

    def readout_pair(self, qubit: int) -> tuple[float, float]:
        if self.readout is None:
            return (0.0, 0.0)
        if isinstance(self.readout, tuple):
            return self.readout
        if qubit >= len(self.readout):
            raise IndexError(f"no readout parameters for qubit {qubit}")
        return self.readout[qubit]

    def confusion(self, qubit: int) -> np.ndarray:
        """2x2 column-stochastic matrix, entry [read, true]."""
        p01, p10 = self.readout_pair(qubit)
        return np.array([[1 - p01, p10], [p01, 1 - p10]])

    def readout_only(self) -> "NoiseModel":
        return NoiseModel(readout=self.readout)

    def to_dict(self) -> dict:
        if self.readout is None:
            readout = None
        elif isinstance(self.readout, tuple):
            readout = {"uniform": list(self.readout)}
        else:
            readout = [list(p) for p in self.readout]
        return {
            "readout": readout,
            "pauli": {"p1": self.p1, "p2": self.p2, "trajectories": self.trajectories},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        readout = data.get("readout")
        if isinstance(readout, dict):
            readout = tuple(readout["uniform"])
        pauli = data.get("pauli") or {}
        return cls(
            readout=readout,
            p1=float(pauli.get("p1", 0.0)),
            p2=float(pauli.get("p2", 0.0)),
            trajectories=int(pauli.get("trajectories", 1)),
        )


# ---------------------------------------------------------------------------
# kernels

def _idx(axis: int, bit: int) -> tuple:
    # the trailing Ellipsis keeps a (0-d) view even on the last axis
    return (slice(None),) * axis + (bit, Ellipsis)


def _kernel_1q(psi: np.ndarray, axis: int, kind: str, theta: float | None = None) -> None:
    """Apply a single-qubit gate in place along ``axis`` of ``psi``."""
    i0, i1 = _idx(axis, 0), _idx(axis, 1)
    if kind == "X":
        tmp = psi[i0].copy()
        psi[i0] = psi[i1]
        psi[i1] = tmp
        return
    phase = _diag_phase(kind, theta)
    if phase is not None:
        psi[i1] *= phase
        return
    if kind == "Y":
        tmp = psi[i0].copy()
        psi[i0] = -1j * psi[i1]
        psi[i1] = 1j * tmp
        return
    # H
    a0 = psi[i0].copy()
    a1 = psi[i1]
    psi[i0] += a1
    psi[i0] *= _SQRT1_2
    a1 *= -1
    a1 += a0
    a1 *= _SQRT1_2


def _kernel(psi: np.ndarray, gate: Gate, offset: int = 0) -> None:
    """Apply ``gate`` in place; qubit ``q`` lives on axis ``q + offset``."""
    if gate.arity == 1:
        _kernel_1q(psi, gate.targets[0] + offset, gate.kind, gate.theta)
        return
    control, target = gate.targets
    sub = psi[_idx(control + offset, 1)]
    axis = target + offset - (1 if target > control else 0)
    _kernel_1q(sub, axis, "X" if gate.kind == "CNOT" else "Rz", gate.theta)


# ---------------------------------------------------------------------------
# state-level operations

def new_state(n: int) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise DimensionError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` to ``state`` in place and return it."""
    if max(gate.targets) >= state.num_qubits:
        raise IndexError(f"{gate.kind}{gate.targets} out of range for {state.num_qubits} qubits")
    _kernel(state.tensor(), gate)
    return state


def run_circuit(circuit: Circuit, state: StateVector | None = None) -> StateVector:
    """Evolve ``state`` (default |0...0>, copied) through ``circuit``."""
    circuit.validate()
    if state is None:
        state = new_state(circuit.num_qubits)
    else:
        state = StateVector(state.num_qubits, state.amplitudes.copy())
    psi = state.tensor()
    for g in circuit.gates:
        _kernel(psi, g)
    return state


def _measured_probs(prob_tensor: np.ndarray, measured: Sequence[int], offset: int = 0) -> np.ndarray:
    n = prob_tensor.ndim - offset
    rest = tuple(q + offset for q in range(n) if q not in measured)
    p = prob_tensor.sum(axis=rest) if rest else prob_tensor
    order = sorted(measured)
    perm = list(range(offset)) + [offset + order.index(q) for q in measured]
    return np.transpose(p, perm)


def apply_readout(probs: np.ndarray, measured: Sequence[int], noise: NoiseModel) -> np.ndarray:
    """Push a (flat) distribution over ``measured`` through the readout channel."""
    k = len(measured)
    p = np.asarray(probs, dtype=float).reshape((2,) * k)
    for axis, q in enumerate(measured):
        p = np.moveaxis(np.tensordot(noise.confusion(q), p, axes=([1], [axis])), 0, axis)
    return p.reshape(-1)


# ---------------------------------------------------------------------------
# Pauli noise

_PAULIS = ("I", "X", "Y", "Z")
_TWO_QUBIT_PAULIS = [(a, b) for a in _PAULIS for b in _PAULIS if (a, b) != ("I", "I")]


def _draw_paulis(circuit: Circuit, noise: NoiseModel, rng: np.random.Generator):
    """Yield ``(gate_index, [(qubit, pauli), ...])`` insertions for one trajectory."""
    out = []
    for i, g in enumerate(circuit.gates):
        if g.arity == 1:
            if noise.p1 > 0 and rng.random() < noise.p1:
                out.append((i, [(g.targets[0], _PAULIS[1 + rng.integers(3)])]))
        elif noise.p2 > 0 and rng.random() < noise.p2:
            a, b = _TWO_QUBIT_PAULIS[rng.integers(15)]
            out.append((i, [(q, p) for q, p in zip(g.targets, (a, b)) if p != "I"]))
    return out


def sample_pauli_trajectory(circuit: Circuit, noise: NoiseModel, seed: int) -> Circuit:
    """One stochastic realisation of ``circuit`` with Pauli errors after gates."""
    inserts = dict(_draw_paulis(circuit, noise, np.random.default_rng(seed)))
    gates: list[Gate] = []
    for i, g in enumerate(circuit.gates):
        gates.append(g)
        for q, p in inserts.get(i, ()):
            gates.append(Gate(p, (q,)))
    return Circuit(circuit.num_qubits, gates, list(circuit.measured_qubits))


def _trajectory_average(circuit: Circuit, noise: NoiseModel, seed: int) -> np.ndarray:
    """Mean measured-qubit distribution over ``noise.trajectories`` realisations.

    Trajectory ``t`` uses seed ``seed + t`` (same draws as
    :func:`sample_pauli_trajectory`); trajectories are evolved in batches
    along a leading axis.
    """
    n = circuit.num_qubits
    total = noise.trajectories
    chunk = max(1, min(total, _BATCH_BUDGET >> n))
    acc = np.zeros(1 << len(circuit.measured_qubits))
    for start in range(0, total, chunk):
        stop = min(total, start + chunk)
        batch = stop - start
        # (gate_index, qubit, pauli) -> rows
        groups: dict[tuple[int, int, str], list[int]] = {}
        for row, t in enumerate(range(start, stop)):
            for i, ins in _draw_paulis(circuit, noise, np.random.default_rng(seed + t)):
                for q, p in ins:
                    groups.setdefault((i, q, p), []).append(row)
        by_gate: dict[int, list] = {}
        for (i, q, p), rows in groups.items():
            by_gate.setdefault(i, []).append((q, p, np.asarray(rows)))

        psi = np.zeros((batch,) + (2,) * n, dtype=complex)
        psi[(slice(None),) + (0,) * n] = 1.0
        for i, g in enumerate(circuit.gates):
            _kernel(psi, g, offset=1)
            for q, p, rows in by_gate.get(i, ()):
                sub = psi[rows]
                # Y = iXZ; the global phase is irrelevant per trajectory
                if p in ("Z", "Y"):
                    _kernel_1q(sub, q + 1, "Z")
                if p in ("X", "Y"):
                    _kernel_1q(sub, q + 1, "X")
                psi[rows] = sub
        probs = _measured_probs(np.abs(psi) ** 2, circuit.measured_qubits, offset=1)
        acc += probs.reshape(batch, -1).sum(axis=0)
    return acc / total


def exact_distribution(
    circuit: Circuit, noise: NoiseModel | None = None, seed: int | None = None
) -> OutcomeDistribution:
    """Outcome probabilities of ``circuit.measured_qubits``.

    Readout noise is applied analytically; Pauli noise by averaging
    ``noise.trajectories`` seeded realisations (``seed`` is then required).
    """
    circuit.validate()
    measured = circuit.measured_qubits
    if noise is not None and noise.has_pauli:
        if seed is None:
            raise ValueError("a seed is required when Pauli noise is enabled")
        probs = _trajectory_average(circuit, noise, seed)
    else:
        state = run_circuit(circuit)
        probs = _measured_probs(np.abs(state.tensor()) ** 2, measured).reshape(-1)
    if noise is not None and noise.has_readout:
        probs = apply_readout(probs, measured, noise)
    return OutcomeDistribution(len(measured), probs)


def sample_counts(dist: OutcomeDistribution, shots: int, seed: int | Sequence[int]) -> Counts:
    """Multinomial sample of ``shots`` outcomes, deterministic in ``seed``."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = np.clip(dist.probs, 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    return Counts(dist.num_bits, rng.multinomial(shots, p))
