"""Multinomial error propagation and a bootstrap cross-check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import (
    GeneratorSet,
    IncompleteDataError,
    StarStatistics,
    _probs,
    _settings_matrix,
    star_correlator_signs,
)
from .protocols import CommNetSettings, commnet_winning_outcome
from .simcore import Counts


class DegenerateDerivativeError(ValueError):
    """Some |I_j| vanishes, so the linearised propagation to S_N diverges."""


def multinomial_sigma(p: float, m: int) -> float:
    """Standard deviation of a relative frequency after ``m`` trials."""
    if m < 1:
        raise ValueError(f"number of trials must be >= 1, got {m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return float(np.sqrt(p * (1 - p) / m))


def sigma_pwin(winning_probs, m: int, n: int, subset: bool = False) -> float:
    """Propagated error of p_win from the per-setting winning probabilities.

    ``winning_probs`` holds p(b(x,y)|x,y) for each setting. With ``subset``
    the average runs over however many settings are given, and the variance
    scales with that count instead of 4^n.
    """
    p = np.asarray(list(winning_probs.values()) if isinstance(winning_probs, Mapping) else winning_probs, dtype=float)
    if m < 1:
        raise ValueError(f"shots per setting must be >= 1, got {m}")
    if not subset and p.size != 4**n:
        raise IncompleteDataError(f"expected {4 ** n} settings, got {p.size}")
    k = p.size
    return float(np.sqrt(np.sum(p * (1 - p)) / (k * k * m)))


def winning_probs_from(records: Mapping[CommNetSettings, object]) -> dict[CommNetSettings, float]:
    return {s: float(_probs(v)[commnet_winning_outcome(s)]) for s, v in records.items()}


@dataclass
class CovarianceMatrixI:
    n: int
    sigma: np.ndarray

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.sigma)


def covariance_I(dists, generators: GeneratorSet, m: int, multinomial: bool = False) -> CovarianceMatrixI:
    """Covariance of the I_j from per-setting statistics.

    By default every measured probability is treated as independent:
    sigma_ij = 1/(4^n m) sum_{x,a,b} s_i s_j p (1 - p), with s_j the sign of
    the (x, a, b) term in I_j. With ``multinomial`` the anticorrelation of
    outcomes within one setting is kept, which gives the exact first-order
    covariance 1/(4^n m) sum_x [<s_i s_j> - <s_i><s_j>].
    """
    n = generators.n
    if m < 1:
        raise ValueError(f"shots per setting must be >= 1, got {m}")
    p = _settings_matrix(dists, 1 << n, 1 << (2 * n))
    signs = star_correlator_signs(generators).astype(float)  # [j, x, o]
    if multinomial:
        mean = np.einsum("ixo,xo->ix", signs, p)
        second = np.einsum("ixo,jxo,xo->ij", signs, signs, p)
        sigma = (second - mean @ mean.T) / (4**n * m)
    else:
        sigma = np.einsum("ixo,jxo,xo->ij", signs, signs, p * (1 - p)) / (4**n * m)
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceMatrixI(n, sigma)


def sigma_SN(
    stats: StarStatistics, cov: CovarianceMatrixI, n: int, epsilon_I: float = 1e-9, signed: bool = False
) -> float:
    """Linearised error of S_N; refuses when some |I_j| < ``epsilon_I``.

    The default weights are |I_j|^(1/n - 1). ``signed`` multiplies in
    sign(I_j), the full derivative of |I_j|^(1/n), which only matters when
    the off-diagonal covariances are not negligible.
    """
    absI = np.abs(np.asarray(stats.I, dtype=float))
    if np.any(absI < epsilon_I):
        j = int(np.argmin(absI))
        raise DegenerateDerivativeError(
            f"|I_{j + 1}| = {absI[j]:.3g} < {epsilon_I:g}: the derivative of |I|^(1/{n}) diverges; "
            "use bootstrap_sigma for this data instead"
        )
    d = absI ** (1.0 / n - 1.0)
    if signed:
        d = d * np.sign(stats.I)
    var = d @ cov.sigma @ d / (n * n * 4 ** (n - 2))
    return float(np.sqrt(max(var, 0.0)))


def bootstrap_sigma(
    counts: Sequence[Counts] | Mapping[object, Counts],
    statistic: Callable[[list[np.ndarray]], float],
    resamples: int = 1000,
    seed: int = 0,
) -> float:
    """Standard deviation of ``statistic`` under multinomial resampling.

    Each setting's counts are redrawn from their own empirical frequencies
    with the same number of shots; ``statistic`` receives the list of
    resampled frequency vectors in the input order. Resample ``r`` uses the
    seed ``(seed, r)``.
    """
    if resamples < 100:
        raise ValueError(f"resamples must be >= 100, got {resamples}")
    items = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    shots = np.array([c.shots for c in items])
    freqs = np.array([c.frequencies() for c in items])
    values = np.empty(resamples)
    for r in range(resamples):
        rng = np.random.default_rng((seed, r))
        draw = rng.multinomial(shots, freqs)
        values[r] = statistic(list(draw / shots[:, None]))
    return float(np.std(values, ddof=1))
