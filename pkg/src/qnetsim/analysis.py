"""Figures of merit: winning probability, star and bilocal inequalities, KL diagnostics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .protocols import EJM_OUTCOME_LABELS, CommNetSettings, commnet_winning_outcome
from .simcore import Counts, OutcomeDistribution

SQRT2 = math.sqrt(2.0)
BILOCAL_QUANTUM_VALUE = 12 * math.sqrt(6.0)
BILOCAL_CLASSICAL_BOUND = 12 * math.sqrt(3.0) + 2 * math.sqrt(15.0)

TETRAHEDRON = np.array(
    [[+1, +1, +1], [+1, -1, -1], [-1, +1, -1], [-1, -1, +1]], dtype=float
)


class IncompleteDataError(ValueError):
    """Some experiment settings are missing from the input."""


class SupportError(ValueError):
    """KL divergence undefined: q vanishes where p does not."""


def _probs(item) -> np.ndarray:
    if isinstance(item, Counts):
        return item.frequencies()
    if isinstance(item, OutcomeDistribution):
        return item.probs
    return np.asarray(item, dtype=float)


def _parity(values: np.ndarray) -> np.ndarray:
    # parity of each integer, vectorised
    v = values.astype(np.int64)
    out = np.zeros_like(v)
    while np.any(v):
        out ^= v & 1
        v >>= 1
    return out


# ---------------------------------------------------------------------------
# communication network

def winning_probability(
    records: Mapping[CommNetSettings, object], n: int, subset: bool = False
) -> float:
    """Average probability of the winning outcome over the given settings.

    ``records`` maps settings to Counts, OutcomeDistribution or a raw vector.
    Unless ``subset`` is set, all ``4**n`` settings must be present.
    """
    if not subset and len(records) != 4**n:
        raise IncompleteDataError(f"expected {4 ** n} settings, got {len(records)}")
    if not records:
        raise IncompleteDataError("no settings given")
    wins = [float(_probs(v)[commnet_winning_outcome(s)]) for s, v in records.items()]
    return float(np.mean(wins))


def certified_entangled_count(p_win: float, n: int) -> int:
    """Lower bound on the number of entangled elements of the central measurement."""
    if not 0.0 <= p_win <= 1.0:
        raise ValueError(f"p_win must lie in [0, 1], got {p_win}")
    # round away float noise before the ceiling (0.580 -> 1.16 - 1 etc.)
    raw = round((2 * p_win - 1) * 2**n, 9)
    return max(0, math.ceil(raw))


# ---------------------------------------------------------------------------
# star network

@dataclass(frozen=True)
class Generator:
    f_mask: int
    f_const: int
    g_mask: int


@dataclass
class GeneratorSet:
    """Bit functions f_j(b) = parity(b & f_mask) ^ f_const and g_j(x) = parity(x & g_mask).

    Masks are MSB-first: bit 1 of the string is the highest bit of the mask.
    """

    n: int
    entries: list[Generator]

    def f_values(self, b: np.ndarray) -> np.ndarray:
        """Array of shape (len(entries), len(b)) of f_j(b)."""
        masks = np.array([e.f_mask for e in self.entries])[:, None]
        consts = np.array([e.f_const for e in self.entries])[:, None]
        return _parity(masks & b[None, :]) ^ consts

    def g_values(self, x: np.ndarray) -> np.ndarray:
        masks = np.array([e.g_mask for e in self.entries])[:, None]
        return _parity(masks & x[None, :])


def _mask(n: int, positions: Sequence[int]) -> int:
    # positions are 1-based string positions
    m = 0
    for p in positions:
        m |= 1 << (n - p)
    return m


def _even_subsets(n: int) -> list[tuple[int, ...]]:
    out = []
    for size in range(0, n + 1, 2):
        out += list(itertools.combinations(range(1, n + 1), size))
    return out


def star_generators(n: int) -> GeneratorSet:
    """Generator functions f_j, g_j of the n-branch star inequality.

    g_j runs over the even-size subsets of the inputs (by size, then
    lexicographically); f_j is the parity of b_1 and the b_k with k in the
    subset other than 1. For n <= 4 the constants reproduce the published
    tables; beyond that the constant is 1 for proper non-empty subsets.
    """
    if n < 2:
        raise ValueError(f"star network needs n >= 2, got {n}")
    entries = []
    for subset in _even_subsets(n):
        f_pos = [1] + [k for k in subset if k != 1]
        if not subset:
            const = 0
        elif n == 2:
            const = 1
        else:
            const = 0 if len(subset) == n else 1
        entries.append(Generator(_mask(n, f_pos), const, _mask(n, subset)))
    return GeneratorSet(n, entries)


@dataclass
class StarStatistics:
    n: int
    I: np.ndarray
    S: float


def _settings_matrix(dists, n_settings: int, width: int) -> np.ndarray:
    """Stack per-setting distributions (indexed 0..n_settings-1) into a matrix."""
    if isinstance(dists, Mapping):
        missing = [i for i in range(n_settings) if i not in dists]
        if missing:
            raise IncompleteDataError(f"missing settings {missing[:5]}")
        rows = [_probs(dists[i]) for i in range(n_settings)]
    else:
        rows = [_probs(d) for d in dists]
        if len(rows) != n_settings:
            raise IncompleteDataError(f"expected {n_settings} settings, got {len(rows)}")
    mat = np.asarray(rows, dtype=float)
    if mat.shape[1] != width:
        raise ValueError(f"expected distributions over {width} outcomes, got {mat.shape[1]}")
    return mat


def star_correlator_signs(gens: GeneratorSet) -> np.ndarray:
    """Signs (-1)^{f_j(b) + g_j(x) + sum a} as an array [j, x, (a, b)]."""
    n = gens.n
    outcomes = np.arange(1 << (2 * n))
    a = outcomes >> n
    b = outcomes & ((1 << n) - 1)
    xs = np.arange(1 << n)
    f = gens.f_values(b)  # (J, outcomes)
    g = gens.g_values(xs)  # (J, x)
    pa = _parity(a)
    exponent = f[:, None, :] ^ g[:, :, None] ^ pa[None, None, :]
    return 1 - 2 * exponent


def star_I(dists, n: int, gens: GeneratorSet | None = None) -> np.ndarray:
    gens = gens or star_generators(n)
    p = _settings_matrix(dists, 1 << n, 1 << (2 * n))
    signs = star_correlator_signs(gens)
    return np.einsum("jxo,xo->j", signs, p) / (1 << n)


# |I_j| at or below this is summation round-off of unit-mass distributions;
# without the floor, (1e-17)^(1/n) would leak ~1e-6 into S_N.
I_ROUNDOFF = 1e-13


def star_S(I: np.ndarray, n: int) -> float:
    absI = np.abs(np.asarray(I, dtype=float))
    absI = np.where(absI <= I_ROUNDOFF, 0.0, absI)
    return float(np.sum(absI ** (1.0 / n)) / 2 ** (n - 2))


def star_statistics(dists, n: int, gens: GeneratorSet | None = None) -> StarStatistics:
    """I_j and S_N from per-setting distributions over (a_1..a_n, b_1..b_n).

    ``dists`` is a sequence indexed by the setting integer x (MSB = x_1) or a
    mapping from that integer.
    """
    I = star_I(dists, n, gens)
    return StarStatistics(n, I, star_S(I, n))


# ---------------------------------------------------------------------------
# bilocal

@dataclass
class BilocalStatistics:
    p_b: np.ndarray
    E_A: np.ndarray  # [b, x]
    E_C: np.ndarray  # [b, z]
    E_AC: np.ndarray  # [b, x, z]
    B: float
    classical_bound: float = BILOCAL_CLASSICAL_BOUND
    m_vectors: np.ndarray = field(default_factory=lambda: TETRAHEDRON.copy())
    zero_pb: list[int] = field(default_factory=list)


def _label_order() -> list[int]:
    # readout index k for each tetrahedron label 1..4
    return [EJM_OUTCOME_LABELS.index(b) for b in range(1, 5)]


def bilocal_tensor(dists) -> np.ndarray:
    """Per-setting probabilities p[x, z, a, b, c] (a, c as bits; b = label - 1).

    ``dists`` is indexed by ``3 * (x - 1) + (z - 1)`` and each entry is over
    the four output bits (a, k1, k2, c).
    """
    p = _settings_matrix(dists, 9, 16)
    return p.reshape(3, 3, 2, 4, 2)[:, :, :, _label_order(), :]


def bilocal_statistics(dists, m_vectors: np.ndarray | None = None) -> BilocalStatistics:
    """Correlators and the bilocal quantity B.

    Conditioning on b uses the per-setting p(b|x,z); p(b) itself is the mean
    over the nine settings. Labels with p(b) = 0 contribute nothing and are
    listed in ``zero_pb``.
    """
    m = TETRAHEDRON if m_vectors is None else np.asarray(m_vectors, dtype=float)
    p = bilocal_tensor(dists)
    sign = np.array([1.0, -1.0])
    p_b_setting = p.sum(axis=(2, 4))  # [x, z, b]
    p_b = p_b_setting.mean(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = p / p_b_setting[:, :, None, :, None]
    cond = np.where(np.isfinite(cond), cond, 0.0)  # [x, z, a, b, c]
    e_a = np.einsum("xzabc,a->bxz", cond, sign)
    e_c = np.einsum("xzabc,c->bxz", cond, sign)
    E_A = e_a.mean(axis=2)
    E_C = e_c.mean(axis=1)
    E_AC = np.einsum("xzabc,a,c->bxz", cond, sign, sign)

    pb = p_b[:, None]
    total = np.sum(np.sqrt(np.clip(pb * (1 - m * E_A), 0, None)))
    total += np.sum(np.sqrt(np.clip(pb * (1 + m * E_C), 0, None)))
    off = ~np.eye(3, dtype=bool)
    mm = m[:, :, None] * m[:, None, :]
    terms = np.sqrt(np.clip(p_b[:, None, None] * (1 - mm * E_AC), 0, None))
    total += np.sum(terms[:, off])
    zero = [int(b) + 1 for b in np.flatnonzero(p_b <= 0)]
    return BilocalStatistics(p_b, E_A, E_C, E_AC, float(total), m_vectors=m.copy(), zero_pb=zero)


# ---------------------------------------------------------------------------
# triangle and KL

def triangle_labelled(dist) -> np.ndarray:
    """Triangle probabilities as p[a-1, b-1, c-1] in tetrahedron labels."""
    order = _label_order()
    p = _probs(dist).reshape(4, 4, 4)
    return p[np.ix_(order, order, order)]


def triangle_theory() -> OutcomeDistribution:
    """Ideal triangle distribution over (a, b, c), label r in {1..4} -> bits of r - 1."""
    p = np.empty((4, 4, 4))
    for a, b, c in itertools.product(range(4), repeat=3):
        distinct = len({a, b, c})
        p[a, b, c] = {1: 25, 2: 1, 3: 5}[distinct] / 256
    return OutcomeDistribution(6, p.reshape(-1))


def kl_divergence(p, q) -> float:
    """Relative entropy sum p ln(p/q) in nats, with 0 ln 0 = 0."""
    p = _probs(p)
    q = _probs(q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    support = p > 0
    bad = np.flatnonzero(support & (q <= 0))
    if bad.size:
        raise SupportError(f"q vanishes on outcome {int(bad[0])} where p = {p[bad[0]]}")
    # relative entropy is non-negative; identical inputs can round to -1e-16
    return max(0.0, float(np.sum(p[support] * np.log(p[support] / q[support]))))


def product_of_marginals(p: np.ndarray, num_bits: int) -> np.ndarray:
    t = np.asarray(p, dtype=float).reshape((2,) * num_bits)
    out = np.ones(())
    for k in range(num_bits):
        marg = t.sum(axis=tuple(i for i in range(num_bits) if i != k))
        out = np.multiply.outer(out, marg)
    return out.reshape(-1)


def source_independence_kl(branch_dists) -> float:
    """Worst case over settings of D(p(a|x) || prod_i p(a_i|x)).

    ``branch_dists`` holds one distribution over the branch outputs per
    setting.
    """
    rows = [_probs(d) for d in (branch_dists.values() if isinstance(branch_dists, Mapping) else branch_dists)]
    if not rows:
        raise IncompleteDataError("no settings given")
    worst = 0.0
    for p in rows:
        k = int(round(math.log2(p.size)))
        worst = max(worst, kl_divergence(p, product_of_marginals(p, k)))
    return worst


def star_branch_marginals(dists, n: int) -> list[np.ndarray]:
    """p(a_1..a_n | x) for each setting, from joint distributions over (a, b)."""
    p = _settings_matrix(dists, 1 << n, 1 << (2 * n))
    return list(p.reshape(1 << n, 1 << n, 1 << n).sum(axis=2))
