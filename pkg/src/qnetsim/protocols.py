"""Circuit builders for the four network experiments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .simcore import Circuit, Gate


def _bits(values: Sequence[int], name: str) -> tuple[int, ...]:
    out = tuple(int(v) for v in values)
    if any(v not in (0, 1) for v in out):
        raise ValueError(f"{name} must be a bit string, got {values!r}")
    return out


@dataclass(frozen=True)
class CommNetSettings:
    n: int
    x: tuple[int, ...]
    y: tuple[int, ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"communication network needs n >= 2, got {self.n}")
        object.__setattr__(self, "x", _bits(self.x, "x"))
        object.__setattr__(self, "y", _bits(self.y, "y"))
        if len(self.x) != self.n or len(self.y) != self.n:
            raise ValueError("x and y must each have n bits")

    @classmethod
    def from_index(cls, n: int, index: int) -> "CommNetSettings":
        """Setting ``index`` in [0, 4^n): high n bits are x, low n bits are y."""
        word = format(index, f"0{2 * n}b")
        return cls(n, tuple(map(int, word[:n])), tuple(map(int, word[n:])))

    @property
    def index(self) -> int:
        return int("".join(map(str, self.x + self.y)), 2)

    def label(self) -> str:
        return "".join(map(str, self.x)) + "," + "".join(map(str, self.y))


@dataclass(frozen=True)
class StarSettings:
    n: int
    xbar: tuple[int, ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"star network needs n >= 2 branches, got {self.n}")
        object.__setattr__(self, "xbar", _bits(self.xbar, "xbar"))
        if len(self.xbar) != self.n:
            raise ValueError("xbar must have n bits")

    @classmethod
    def from_index(cls, n: int, index: int) -> "StarSettings":
        return cls(n, tuple(map(int, format(index, f"0{n}b"))))

    @property
    def index(self) -> int:
        return int("".join(map(str, self.xbar)), 2)

    def label(self) -> str:
        return "".join(map(str, self.xbar))


@dataclass(frozen=True)
class BilocalSettings:
    """Basis choices of the two branch nodes: 1 = sigma_X, 2 = sigma_Y, 3 = sigma_Z."""

    x: int
    z: int

    def __post_init__(self):
        if self.x not in (1, 2, 3) or self.z not in (1, 2, 3):
            raise ValueError(f"bases must be in {{1, 2, 3}}, got x={self.x}, z={self.z}")

    @classmethod
    def from_index(cls, index: int) -> "BilocalSettings":
        return cls(index // 3 + 1, index % 3 + 1)

    @property
    def index(self) -> int:
        return 3 * (self.x - 1) + (self.z - 1)

    def label(self) -> str:
        return f"{self.x}{self.z}"


def ghz_preparation(qubits: Sequence[int]) -> list[Gate]:
    gates = [Gate("H", (qubits[0],))]
    gates += [Gate("CNOT", (qubits[0], q)) for q in qubits[1:]]
    return gates


def bsm_decoding(qubits: Sequence[int]) -> list[Gate]:
    """Map the GHZ-like basis state |M_b> on ``qubits`` to |b>."""
    gates = [Gate("CNOT", (qubits[0], q)) for q in qubits[1:]]
    gates.append(Gate("H", (qubits[0],)))
    return gates


def build_commnet_circuit(s: CommNetSettings) -> Circuit:
    qubits = list(range(s.n))
    c = Circuit(s.n)
    c.extend(ghz_preparation(qubits))
    for k in qubits:
        if s.x[k]:
            c.add("Z", k)
        if s.y[k]:
            c.add("X", k)
    c.extend(bsm_decoding(qubits))
    return c


def build_star_circuit(s: StarSettings) -> Circuit:
    """Branch qubit ``i`` pairs with central qubit ``n + i``.

    Outputs are ordered ``(a_1..a_n, b_1..b_n)``.
    """
    n = s.n
    c = Circuit(2 * n)
    for i in range(n):
        c.add("H", i).add("CNOT", i, n + i)
    for i, xi in enumerate(s.xbar):
        c.add("Tdg" if xi else "T", i).add("H", i)
    c.extend(bsm_decoding(list(range(n, 2 * n))))
    return c


def ejm_unitary_gates(pair: Sequence[int]) -> list[Gate]:
    """Gates of the unitary U with U|k1 k2> = |EJM_k>, in application order."""
    q1, q2 = pair
    return [
        Gate("H", (q1,)), Gate("H", (q2,)),
        Gate("S", (q1,)), Gate("S", (q2,)),
        Gate("CRz", (q1, q2), np.pi / 2),
        Gate("H", (q1,)),
        Gate("CNOT", (q1, q2)),
    ]


# Tetrahedron vertex index (1..4) of the EJM element read out as k = 2*k1 + k2.
# Element k has second-qubit Bloch vector m_b / 2 and first-qubit -m_b / 2.
EJM_OUTCOME_LABELS = (4, 1, 3, 2)


def ejm_label(k: int) -> int:
    return EJM_OUTCOME_LABELS[k]


def build_ejm_measurement(pair: Sequence[int]) -> list[Gate]:
    """Inverse EJM unitary on ``pair``.

    Reading (k1, k2) from ``pair`` afterwards selects |EJM_k>, k = 2*k1 + k2;
    the tetrahedron label is ``ejm_label(k)``.
    """
    if len(pair) != 2 or pair[0] == pair[1]:
        raise ValueError(f"EJM needs two distinct qubits, got {pair!r}")
    return [g.inverse() for g in reversed(ejm_unitary_gates(pair))]


def singlet_preparation(q1: int, q2: int) -> list[Gate]:
    return [Gate("X", (q1,)), Gate("H", (q1,)), Gate("CNOT", (q1, q2)), Gate("X", (q2,))]


_BASIS_ROTATION = {1: ("H",), 2: ("Sdg", "H"), 3: ()}


def build_bilocal_circuit(s: BilocalSettings) -> Circuit:
    """Qubits: A=0, central=(1, 2), C=3; outputs are the bits (a, k1, k2, c).

    The EJM's first qubit is the C-side central qubit 2, so that the A-side
    partner carries +m_b and the C-side partner -m_b.
    """
    c = Circuit(4, measured_qubits=[0, 2, 1, 3])
    c.extend(singlet_preparation(0, 1))
    c.extend(singlet_preparation(2, 3))
    for kind in _BASIS_ROTATION[s.x]:
        c.add(kind, 0)
    for kind in _BASIS_ROTATION[s.z]:
        c.add(kind, 3)
    c.extend(build_ejm_measurement((2, 1)))
    return c


def build_triangle_circuit() -> Circuit:
    """Six-qubit ring: sources on (1,2), (3,4), (5,0); nodes A=(0,1), B=(2,3), C=(4,5).

    Outputs are the bit pairs (k1, k2) of A, B, C in that order.
    """
    c = Circuit(6)
    for q1, q2 in ((1, 2), (3, 4), (5, 0)):
        c.extend(singlet_preparation(q1, q2))
    for pair in ((0, 1), (2, 3), (4, 5)):
        c.extend(build_ejm_measurement(pair))
    return c


def commnet_winning_outcome(s: CommNetSettings) -> int:
    """Index (MSB-first) of the single winning output for settings ``s``."""
    b = [int(np.bitwise_xor.reduce(s.x))] + [s.y[k] ^ s.y[0] for k in range(1, s.n)]
    return int("".join(map(str, b)), 2)


def ghz_basis_state(b: Sequence[int]) -> np.ndarray:
    """|M_b> = Z^{b_1} X^{b_2} ... X^{b_n} |GHZ> as a flat amplitude vector."""
    n = len(b)
    psi = np.zeros(1 << n, dtype=complex)
    tail = int("".join(map(str, b[1:])), 2) if n > 1 else 0
    first = tail
    second = (1 << n) - 1 - tail
    psi[first] = 1 / np.sqrt(2)
    psi[second] = (-1) ** b[0] / np.sqrt(2)
    return psi


def ejm_state(k: int) -> np.ndarray:
    """|EJM_k> for k = 2*k1 + k2, from dense 4x4 matrices (no simulator kernels)."""
    h = Gate("H", (0,)).matrix()
    s_ = Gate("S", (0,)).matrix()
    eye = np.eye(2)
    u = (
        Gate("CNOT", (0, 1)).matrix()
        @ np.kron(h, eye)
        @ Gate("CRz", (0, 1), np.pi / 2).matrix()
        @ np.kron(s_, s_)
        @ np.kron(h, h)
    )
    return u[:, k].copy()
