"""Weighted Wiener pseudometric and the Gaussian limit on finite grids.

The distance d(x, y) is the L2 distance of the weighted Wiener process
w(x) W(x); combined with a time pseudometric rho it gives the max-metric on
time-level pairs.  The limit model assembles the covariance
w(x) w(y) [P(X_s <= x, X_t <= y) - xy] (or its uncentered variant) on a
finite set of cells, factors it, and samples mean-zero Gaussian vectors
deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import parallel
from .errors import DomainError, IndefiniteCovarianceError
from .models import PathBatch, ProcessModel, has_joint_cdf, joint_cdf, rho_metric
from .weights import WeightSpec

# Diagonal jitter ladder used when a covariance estimate is slightly
# indefinite; the value actually applied is recorded on the model.
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)

DEFAULT_CLIP = 1e-3


@dataclass(frozen=True)
class MetricSpec:
    """Weight, time exponent and level clip for the combined metric."""

    weight: WeightSpec
    theta: float = 5.0
    clip: float = DEFAULT_CLIP

    def __post_init__(self):
        if not (0.0 < self.clip < 0.5):
            raise DomainError("clip must lie in (0, 0.5)")
        if self.theta <= 4.0:
            raise DomainError("theta must exceed 4")


def weighted_wiener_distance(w: WeightSpec, x, y):
    """d(x, y) = sqrt(w(max)^2 |y - x| + min * (w(x) - w(y))^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    wx = np.asarray(w(x), dtype=float)
    wy = np.asarray(w(y), dtype=float)
    hi = np.where(x >= y, wx, wy)
    lo = np.minimum(x, y)
    d2 = hi * hi * np.abs(y - x) + lo * (wx - wy) ** 2
    out = np.sqrt(d2)
    return float(out) if out.ndim == 0 else out


def combined_metric(spec: MetricSpec, s, x, t, y):
    """max of the level distance and the time pseudometric."""
    return np.maximum(weighted_wiener_distance(spec.weight, x, y),
                      rho_metric(s, t, spec.theta))


@dataclass(frozen=True)
class TripleCheckReport:
    passed: bool
    violation: Optional[tuple[float, float, float]] = None


def check_distance_monotone(w: WeightSpec, triples: Sequence[tuple[float, float, float]]) -> TripleCheckReport:
    """Assert d(x, y) <= d(x, z) for ordered triples inside the window."""
    for x, y, z in triples:
        if not (0.0 < x <= y <= z <= w.gamma):
            raise DomainError(f"triple {(x, y, z)} is not ordered inside (0, gamma]")
        if weighted_wiener_distance(w, x, y) > weighted_wiener_distance(w, x, z) + 1e-12:
            return TripleCheckReport(False, (x, y, z))
    return TripleCheckReport(True)


@dataclass(frozen=True)
class PairCheckReport:
    passed: bool
    violation: Optional[tuple[float, float]] = None


def weight_drift_check(w: WeightSpec, pairs: Sequence[tuple[float, float]]) -> PairCheckReport:
    """Assert |x w(x) - y w(y)| <= sqrt(2) d(x, y) on the probe pairs."""
    for x, y in pairs:
        lhs = abs(x * float(w(x)) - y * float(w(y)))
        if lhs > math.sqrt(2.0) * weighted_wiener_distance(w, x, y) + 1e-12:
            return PairCheckReport(False, (x, y))
    return PairCheckReport(True)


def _semidefinite_cholesky(cov: np.ndarray, rel_tol: float = 1e-10) -> Optional[np.ndarray]:
    """Lower-triangular factor of a PSD matrix; zero pivots are skipped.

    Returns None when a pivot is negative beyond the tolerance (the matrix
    is then treated as indefinite by the caller).
    """
    k = cov.shape[0]
    scale = max(float(np.max(np.abs(np.diag(cov)))), 1e-300)
    tol = rel_tol * scale
    L = np.zeros_like(cov)
    for j in range(k):
        d = cov[j, j] - np.dot(L[j, :j], L[j, :j])
        if d > tol:
            L[j, j] = math.sqrt(d)
            below = cov[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
            L[j + 1:, j] = below / L[j, j]
        elif d >= -tol:
            L[j, j] = 0.0
        else:
            return None
    return L


@dataclass(frozen=True)
class LimitModel:
    """Gaussian limit covariance on (time, level) cells plus its factor."""

    cells: tuple[tuple[float, float], ...]
    covariance: np.ndarray
    factor: np.ndarray
    jitter: float
    centered: bool
    provenance: dict

    def __post_init__(self):
        for arr in (self.covariance, self.factor):
            a = np.asarray(arr, dtype=float)
            a.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.cells)


def _factor_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    for jit in JITTER_LADDER:
        attempt = cov if jit == 0.0 else cov + jit * np.eye(cov.shape[0])
        L = _semidefinite_cholesky(attempt)
        if L is None:
            continue
        resid = float(np.max(np.abs(L @ L.T - attempt)))
        if resid <= 1e-8 * (1.0 + float(np.max(np.abs(cov)))):
            return L, jit
    raise IndefiniteCovarianceError(
        "covariance failed to factor after jitter escalation; "
        "suspect a covariance bug or a too-coarse Monte Carlo estimate")


def _estimated_joint(calibration: PathBatch, cells) -> np.ndarray:
    """Joint indicator frequencies P(X_s <= x, X_t <= y) from a batch."""
    grid = calibration.grid
    cols = np.empty((calibration.n, len(cells)))
    for j, (t, y) in enumerate(cells):
        cols[:, j] = calibration.values[:, grid.index_of(t)] <= y
    return (cols.T @ cols) / calibration.n


def build_limit_model(model: ProcessModel, cells: Sequence[tuple[float, float]],
                      w: WeightSpec, centered: bool = True,
                      calibration: Optional[PathBatch] = None) -> LimitModel:
    """Assemble and factor the limit covariance on the given cells.

    Uses the closed-form joint CDF when the model has one; otherwise the
    joint frequencies come from an independent calibration batch, recorded
    in the provenance.
    """
    cells = tuple((float(t), float(y)) for t, y in cells)
    if not cells:
        raise DomainError("need at least one cell")
    for t, y in cells:
        if not (0.0 < y < 1.0):
            raise DomainError("cell levels must lie strictly inside (0, 1)")
    k = len(cells)
    wv = np.array([float(w(y)) for _, y in cells])
    ys = np.array([y for _, y in cells])
    if has_joint_cdf(model):
        joint = np.empty((k, k))
        for i, (s, x) in enumerate(cells):
            for j in range(i, k):
                t, y = cells[j]
                joint[i, j] = joint[j, i] = joint_cdf(model, s, t, x, y)
        provenance = {"joint": "closed-form", "model": model.describe()}
    else:
        if calibration is None:
            raise DomainError(f"model {model.kind} needs a calibration batch")
        joint = _estimated_joint(calibration, cells)
        provenance = {"joint": "calibration-batch", "model": model.describe(),
                      "calibration_n": calibration.n, "calibration_seed": calibration.seed}
    cov = np.outer(wv, wv) * joint
    if centered:
        cov = cov - np.outer(wv * ys, wv * ys)
    cov = 0.5 * (cov + cov.T)
    factor, jitter = _factor_with_jitter(cov)
    provenance["jitter_ladder"] = [f"{j:g}" for j in JITTER_LADDER]
    return LimitModel(cells, cov, factor, jitter, centered, provenance)


def sample_limit_field(limit: LimitModel, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """reps mean-zero Gaussian vectors with the model covariance.

    Deterministic per (seed, rep index): replication blocks are seeded the
    same way path blocks are.
    """
    if reps < 1:
        raise DomainError("need reps >= 1")
    k = limit.size
    out = np.empty((reps, k))
    Lt = limit.factor.T.copy()

    def job(idx, start, stop):
        rng = parallel.derive_rng(seed, parallel.STREAM_LIMIT, idx)
        z = rng.standard_normal((stop - start, k))
        out[start:stop] = z @ Lt

    parallel.map_blocks(job, reps, workers)
    return out


def dg0_upper_bound_check(model: ProcessModel, w: WeightSpec, l_hat: float,
                          probes: Sequence[tuple[float, float, float, float]],
                          theta: float = 5.0, tol: float = 1e-6) -> PairCheckReport:
    """Check d_{G0}^2 <= 2 d^2(x, y) + 4 L rho^2 at probes (s, x, t, y).

    d_{G0}^2 is computed from the closed-form joint CDF; the inequality is
    conditional on the supplied measured constant.
    """
    if l_hat < 0.0:
        raise DomainError("the measured constant must be non-negative")
    for s, x, t, y in probes:
        wx, wy = float(w(x)), float(w(y))
        joint = joint_cdf(model, s, t, x, y)
        dg0_sq = wx * wx * x + wy * wy * y - 2.0 * wx * wy * joint
        d = weighted_wiener_distance(w, x, y)
        rho = rho_metric(s, t, theta)
        if dg0_sq > 2.0 * d * d + 4.0 * l_hat * rho * rho + tol:
            return PairCheckReport(False, (float(s), float(x)))
    return PairCheckReport(True)


def export_covariance_csv(limit: LimitModel, path: str) -> None:
    """Row-major CSV of the covariance with a header naming the grid pairs."""
    header = ",".join(f"({t:g};{y:g})" for t, y in limit.cells)
    lines = ["# weplab covariance v1",
             f"# centered={limit.centered} jitter={limit.jitter:g}",
             header]
    for row in limit.covariance:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
