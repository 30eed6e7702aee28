import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnetsim.analysis import (
    BILOCAL_CLASSICAL_BOUND,
    BILOCAL_QUANTUM_VALUE,
    TETRAHEDRON,
    Generator,
    GeneratorSet,
    IncompleteDataError,
    SupportError,
    bilocal_statistics,
    certified_entangled_count,
    kl_divergence,
    product_of_marginals,
    source_independence_kl,
    star_branch_marginals,
    star_generators,
    star_statistics,
    triangle_labelled,
    triangle_theory,
    winning_probability,
)
from qnetsim.protocols import (
    EJM_OUTCOME_LABELS,
    BilocalSettings,
    CommNetSettings,
    StarSettings,
    build_bilocal_circuit,
    build_commnet_circuit,
    build_star_circuit,
    commnet_winning_outcome,
)
from qnetsim.simcore import exact_distribution


def star_dists(n):
    return [exact_distribution(build_star_circuit(StarSettings.from_index(n, i))) for i in range(2**n)]


def bilocal_dists():
    return [exact_distribution(build_bilocal_circuit(BilocalSettings.from_index(i))) for i in range(9)]


# ---------------------------------------------------------------------------
# communication network


def test_winning_probability_noiseless():
    n = 2
    recs = {CommNetSettings.from_index(n, i): exact_distribution(build_commnet_circuit(CommNetSettings.from_index(n, i))) for i in range(16)}
    assert winning_probability(recs, n) == pytest.approx(1, abs=1e-12)


def test_winning_probability_uniform_and_wrong():
    n = 3
    settings_ = [CommNetSettings.from_index(n, i) for i in range(64)]
    uniform = {s: np.full(8, 1 / 8) for s in settings_}
    assert winning_probability(uniform, n) == pytest.approx(1 / 8)
    wrong = {}
    for s in settings_:
        v = np.zeros(8)
        v[(commnet_winning_outcome(s) + 1) % 8] = 1
        wrong[s] = v
    assert winning_probability(wrong, n) == 0.0


def test_winning_probability_incomplete():
    recs = {CommNetSettings.from_index(2, 0): np.eye(4)[0]}
    with pytest.raises(IncompleteDataError):
        winning_probability(recs, 2)
    assert winning_probability(recs, 2, subset=True) == 1.0


@pytest.mark.parametrize("p,n,count", [(0.939, 2, 4), (0.804, 5, 20), (0.580, 9, 82), (0.5, 4, 0), (0.3, 3, 0)])
def test_certified_count_table(p, n, count):
    assert certified_entangled_count(p, n) == count


def test_certified_count_full():
    for n in range(2, 11):
        assert certified_entangled_count(1.0, n) == 2**n


@given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 12))
def test_certified_count_monotone(p, q, n):
    lo, hi = sorted((p, q))
    assert certified_entangled_count(lo, n) <= certified_entangled_count(hi, n)
    if lo <= 0.5:
        assert certified_entangled_count(lo, n) == 0


def test_certified_count_range():
    with pytest.raises(ValueError):
        certified_entangled_count(1.2, 2)


# ---------------------------------------------------------------------------
# star generators: literal transcription of the published tables
# (f positions, f constant, g positions)

TABLES = {
    2: [((1,), 0, ()), ((1, 2), 1, (1, 2))],
    3: [((1,), 0, ()), ((1, 2), 1, (1, 2)), ((1, 3), 1, (1, 3)), ((1, 2, 3), 1, (2, 3))],
    4: [
        ((1,), 0, ()),
        ((1, 2), 1, (1, 2)),
        ((1, 3), 1, (1, 3)),
        ((1, 4), 1, (1, 4)),
        ((1, 2, 3), 1, (2, 3)),
        ((1, 2, 4), 1, (2, 4)),
        ((1, 3, 4), 1, (3, 4)),
        ((1, 2, 3, 4), 0, (1, 2, 3, 4)),
    ],
}


def _mask(n, positions):
    return sum(1 << (n - p) for p in positions)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generator_tables(n):
    expected = [Generator(_mask(n, f), c, _mask(n, g)) for f, c, g in TABLES[n]]
    assert star_generators(n).entries == expected


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_generator_structure(n):
    gens = star_generators(n)
    assert len(gens.entries) == 2 ** (n - 1)
    g_masks = [e.g_mask for e in gens.entries]
    assert len(set(g_masks)) == len(g_masks)
    assert all(bin(m).count("1") % 2 == 0 for m in g_masks)
    first = gens.entries[0]
    assert first == Generator(1 << (n - 1), 0, 0)
    for e in gens.entries[1:]:
        # f always includes b_1 plus the g-subset's other members
        assert e.f_mask == e.g_mask | (1 << (n - 1))
        full = e.g_mask == (1 << n) - 1
        if n >= 3:
            assert e.f_const == (0 if full else 1)


def test_generators_reject_small_n():
    with pytest.raises(ValueError):
        star_generators(1)


# ---------------------------------------------------------------------------
# star statistics


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_star_quantum_value(n):
    st_ = star_statistics(star_dists(n), n)
    assert st_.S == pytest.approx(math.sqrt(2), abs=1e-9)
    assert np.allclose(np.abs(st_.I), 2 ** (-n / 2), atol=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_star_deterministic_strategy(n):
    # a = 0...0 and b = 0...0 for every setting
    dists = [np.eye(1 << (2 * n))[0] for _ in range(2**n)]
    st_ = star_statistics(dists, n)
    assert st_.I[0] == pytest.approx(1)
    assert np.allclose(st_.I[1:], 0, atol=1e-15)
    assert st_.S == pytest.approx(1 / 2 ** (n - 2))


def test_star_incomplete():
    with pytest.raises(IncompleteDataError):
        star_statistics(star_dists(2)[:3], 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31), st.data())
def test_sign_flip_irrelevance(n, seed, data):
    rng = np.random.default_rng(seed)
    dists = [rng.dirichlet(np.ones(1 << (2 * n))) for _ in range(2**n)]
    gens = star_generators(n)
    flips = data.draw(st.lists(st.booleans(), min_size=len(gens.entries), max_size=len(gens.entries)))
    flipped = GeneratorSet(n, [Generator(e.f_mask, e.f_const ^ int(f), e.g_mask) for e, f in zip(gens.entries, flips)])
    a = star_statistics(dists, n, gens)
    b = star_statistics(dists, n, flipped)
    sign = np.where(flips, -1.0, 1.0)
    assert np.allclose(b.I, sign * a.I, atol=1e-15)
    assert b.S == pytest.approx(a.S, abs=1e-14)


# ---------------------------------------------------------------------------
# bilocal


def test_bilocal_quantum_value():
    st_ = bilocal_statistics(bilocal_dists())
    assert st_.B == pytest.approx(12 * math.sqrt(6), abs=1e-6)
    assert BILOCAL_QUANTUM_VALUE == pytest.approx(29.3939, abs=1e-4)
    assert np.allclose(st_.p_b, 0.25)
    assert st_.zero_pb == []


def test_bilocal_classical_constant():
    assert BILOCAL_CLASSICAL_BOUND == pytest.approx(12 * math.sqrt(3) + 2 * math.sqrt(15), abs=1e-12)
    assert round(BILOCAL_CLASSICAL_BOUND, 3) == 28.531


def test_bilocal_uniform_distribution():
    # 12 + 12 + 24 square-root terms, each sqrt(1/4)
    st_ = bilocal_statistics([np.full(16, 1 / 16)] * 9)
    assert np.allclose(st_.E_A, 0) and np.allclose(st_.E_C, 0) and np.allclose(st_.E_AC, 0)
    assert st_.B == pytest.approx(24.0, abs=1e-12)


def test_bilocal_correlators_in_range():
    rng = np.random.default_rng(4)
    st_ = bilocal_statistics([rng.dirichlet(np.ones(16)) for _ in range(9)])
    for e in (st_.E_A, st_.E_C, st_.E_AC):
        assert np.all(np.abs(e) <= 1 + 1e-12)
    assert st_.p_b.sum() == pytest.approx(1)


def test_bilocal_zero_pb_flagged():
    dists = []
    for d in bilocal_dists():
        p = d.probs.reshape(2, 4, 2).copy()
        p[:, 0, :] = 0
        dists.append((p / p.sum()).reshape(-1))
    st_ = bilocal_statistics(dists)
    assert st_.zero_pb == [EJM_OUTCOME_LABELS[0]]
    assert math.isfinite(st_.B)


def _relabel(dists, perm):
    """Move label b to perm[b] (labels 0-based) in raw (a, k1, k2, c) vectors."""
    order = [EJM_OUTCOME_LABELS.index(b) for b in range(1, 5)]  # label -> readout k
    out = []
    for d in dists:
        p = d.probs.reshape(2, 4, 2)
        q = np.empty_like(p)
        for b in range(4):
            q[:, order[perm[b]], :] = p[:, order[b], :]
        out.append(q.reshape(-1))
    return out


def test_bilocal_relabel_invariance():
    dists = bilocal_dists()
    base = bilocal_statistics(dists).B
    values = []
    for perm in itertools.permutations(range(4)):
        moved = _relabel(dists, perm)
        m = np.empty_like(TETRAHEDRON)
        m[list(perm)] = TETRAHEDRON
        assert bilocal_statistics(moved, m_vectors=m).B == pytest.approx(base, abs=1e-9)
        values.append(bilocal_statistics(moved).B)
    # relabelling the outcomes alone only ever lowers B
    assert max(values) == pytest.approx(base, abs=1e-9)
    assert sum(v > base - 1e-9 for v in values) == 1


# ---------------------------------------------------------------------------
# triangle and KL


def test_triangle_theory_cases():
    p = triangle_labelled(triangle_theory())
    assert p[0, 0, 0] == pytest.approx(25 / 256)
    assert p[0, 0, 1] == pytest.approx(1 / 256)
    assert p[0, 1, 2] == pytest.approx(5 / 256)
    assert triangle_theory().probs.sum() == pytest.approx(1, abs=1e-15)


def test_kl_examples():
    assert kl_divergence(np.array([0.3, 0.7]), np.array([0.3, 0.7])) == 0
    assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)


def test_kl_support_error():
    with pytest.raises(SupportError, match="outcome 1"):
        kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))


@given(st.integers(1, 16), st.integers(0, 2**31))
def test_kl_nonnegative(k, seed):
    rng = np.random.default_rng(seed)
    assert kl_divergence(rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))) >= 0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_source_independence_noiseless(n):
    assert source_independence_kl(star_branch_marginals(star_dists(n), n)) == pytest.approx(0, abs=1e-12)


def test_source_independence_correlated():
    assert source_independence_kl([np.array([0.5, 0, 0, 0.5])]) == pytest.approx(math.log(2), abs=1e-12)


@given(st.integers(1, 4), st.integers(0, 2**31))
def test_source_independence_nonnegative(k, seed):
    rng = np.random.default_rng(seed)
    assert source_independence_kl([rng.dirichlet(np.ones(1 << k)) for _ in range(3)]) >= 0


def test_product_of_marginals():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(product_of_marginals(p, 2), np.kron([0.3, 0.7], [0.4, 0.6]))
