"""Readout-error mitigation: calibration matrices, pseudo-inverse and least-squares filters."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from .simcore import (
    Circuit,
    NoiseModel,
    OutcomeDistribution,
    apply_readout,
    exact_distribution,
    sample_counts,
)


class ConvergenceError(RuntimeError):
    """The constrained least-squares solve did not converge."""


@dataclass
class CalibrationMatrix:
    """``A[i, j]`` = P(read i | prepared basis state j)."""

    n: int
    A: np.ndarray
    mode: str = "exact"
    shots: int | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        dim = 1 << self.n
        if self.A.shape != (dim, dim):
            raise ValueError(f"calibration matrix must be {dim}x{dim}, got {self.A.shape}")

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.A))

    def to_dict(self) -> dict:
        return {"n": self.n, "mode": self.mode, "shots": self.shots, "matrix": self.A.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationMatrix":
        return cls(int(data["n"]), np.array(data["matrix"], dtype=float), data.get("mode", "exact"), data.get("shots"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class QuasiDistribution:
    """Mitigated values that may be negative; never clipped."""

    values: np.ndarray
    condition_number: float | None = None
    sum: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.sum = float(self.values.sum())

    @property
    def probs(self) -> np.ndarray:
        return self.values

    @property
    def has_negative(self) -> bool:
        return bool(np.any(self.values < 0))


def build_calibration(
    n: int,
    noise: NoiseModel | None,
    mode: str = "exact",
    shots: int | None = None,
    seed: int = 0,
) -> CalibrationMatrix:
    """Prepare each of the 2^n basis states and record the readout statistics.

    Only the readout part of ``noise`` enters; state preparation is ideal.
    Sampled mode draws ``shots`` per column with seed ``(seed, column)``.
    """
    readout = noise.readout_only() if noise is not None else NoiseModel()
    dim = 1 << n
    A = np.empty((dim, dim))
    if mode == "exact":
        ideal = np.eye(dim)
        for j in range(dim):
            A[:, j] = apply_readout(ideal[j], list(range(n)), readout)
        return CalibrationMatrix(n, A, "exact")
    if mode != "sampled":
        raise ValueError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    if shots is None or shots < 1:
        raise ValueError("sampled calibration needs shots >= 1")
    for j in range(dim):
        c = Circuit(n)
        for q, bit in enumerate(format(j, f"0{n}b")):
            if bit == "1":
                c.add("X", q)
        dist = exact_distribution(c, readout)
        A[:, j] = sample_counts(dist, shots, (seed, j)).values / shots
    return CalibrationMatrix(n, A, "sampled", shots)


def _vector(raw) -> np.ndarray:
    if isinstance(raw, OutcomeDistribution):
        return raw.probs
    if hasattr(raw, "frequencies"):
        return raw.frequencies()
    return np.asarray(raw, dtype=float)


def mitigate_pinv(raw, cal: CalibrationMatrix) -> QuasiDistribution:
    r = _vector(raw)
    if r.shape != (cal.A.shape[1],):
        raise ValueError(f"raw vector has shape {r.shape}, calibration is {cal.A.shape}")
    return QuasiDistribution(np.linalg.pinv(cal.A) @ r, cal.condition_number)


def simplex_kkt_violation(A: np.ndarray, x: np.ndarray, r: np.ndarray) -> float:
    """Largest violation of the optimality conditions of min ||Ax - r||^2 on the simplex."""
    g = A.T @ (A @ x - r)
    support = x > 0
    mu = float(g[support].mean())
    on = np.abs(g[support] - mu).max(initial=0.0)
    off = np.clip(mu - g[~support], 0, None).max(initial=0.0)
    return float(max(on, off))


def mitigate_lsq(raw, cal: CalibrationMatrix, tol: float = 1e-8, maxiter: int | None = None) -> OutcomeDistribution:
    """Closest distribution x >= 0, sum x = 1 minimising ||A x - raw||_2.

    The sum constraint is enforced by a heavily weighted extra row in a
    non-negative least-squares solve; the result is then renormalised.
    ``tol`` bounds the projected-gradient violation accepted afterwards.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = _vector(raw)
    A = cal.A
    dim = A.shape[1]
    if r.shape != (dim,):
        raise ValueError(f"raw vector has shape {r.shape}, calibration is {A.shape}")
    weight = 1e4 * max(1.0, float(np.abs(A).max()))
    M = np.vstack([A, weight * np.ones((1, dim))])
    rhs = np.concatenate([r, [weight]])
    try:
        x, _ = nnls(M, rhs, maxiter=maxiter if maxiter is not None else 50 * dim)
    except RuntimeError as exc:
        resid = float(np.linalg.norm(A @ np.clip(np.linalg.pinv(A) @ r, 0, None) - r))
        raise ConvergenceError(f"least-squares mitigation did not converge (pinv-clip residual {resid:.3g})") from exc
    total = x.sum()
    if total <= 0:
        raise ConvergenceError("least-squares mitigation returned an empty vector")
    x = x / total
    violation = simplex_kkt_violation(A, x, r)
    if violation > tol:
        resid = float(np.linalg.norm(A @ x - r))
        raise ConvergenceError(f"optimality violation {violation:.3g} > tol {tol:g} (residual {resid:.3g})")
    return OutcomeDistribution(int(round(np.log2(dim))), x)


def mitigate(raw, cal: CalibrationMatrix, method: str):
    if method == "pinv":
        return mitigate_pinv(raw, cal)
    if method == "lsq":
        return mitigate_lsq(raw, cal)
    raise ValueError(f"unknown mitigation method {method!r}")
