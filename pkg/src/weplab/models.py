"""Uniform processes on a time grid.

Implemented kinds: the Brownian-motion copula (X_t = Phi(B_t / sqrt(t))),
the fully dependent process (one uniform draw shared across the grid), the
time-iid process (independent uniform per grid point), and an atomic-copula
(a time-constant draw from a df with one atom pushed through the randomized
distributional transform, exercising the atom bookkeeping).

Brownian paths use exact N(0, dt) increments at the grid times only; every
implemented functional is grid-measurable, so no bridge infill is done.
Suprema over time are therefore maxima over grid points, a declared
approximation quantified by the refinement studies in the verifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import parallel
from .errors import DomainError, UnsupportedModelError
from .numerics import bvn_cdf, std_normal_cdf
from .transforms import dist_transform, uniform_atom_mixture

BM_COPULA = "bm-copula"
DEPENDENT = "dependent"
IID_TIME = "iid-time"
ATOMIC = "atomic"
MODEL_KINDS = (BM_COPULA, DEPENDENT, IID_TIME, ATOMIC)

# Uniform values are kept strictly inside (0, 1).
_OPEN_LO = 5e-324
_OPEN_HI = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times in [a, b] with a > 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise DomainError("grid needs at least one time point")
        if pts[0] <= 0.0:
            raise DomainError("grid must start strictly above 0")
        if np.any(np.diff(pts) <= 0.0):
            raise DomainError("grid times must be strictly increasing")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, a: float = 1.0, b: float = 2.0, count: int = 129) -> "TimeGrid":
        if count < 2:
            raise DomainError("uniform grid needs at least two points")
        if not (0.0 < a < b):
            raise DomainError("need 0 < a < b")
        return cls(np.linspace(a, b, count))

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    def __len__(self) -> int:
        return int(self.points.size)

    def refined(self) -> "TimeGrid":
        """Grid with midpoints inserted (doubled density, same endpoints)."""
        pts = self.points
        if pts.size < 2:
            return self
        mids = 0.5 * (pts[:-1] + pts[1:])
        return TimeGrid(np.sort(np.concatenate([pts, mids])))

    def index_of(self, t: float) -> int:
        """Index of a grid time, matched within 1e-9."""
        idx = int(np.argmin(np.abs(self.points - t)))
        if abs(float(self.points[idx]) - t) > 1e-9:
            raise DomainError(f"time {t} is not on the grid")
        return idx

    def ball_indices(self, t: float, radius: float) -> np.ndarray:
        """Grid indices with |s - t| <= radius, with a relative slack guard."""
        r = radius * (1.0 + 1e-9) + 1e-15
        return np.flatnonzero(np.abs(self.points - t) <= r)


@dataclass(frozen=True)
class ProcessModel:
    kind: str
    atom_mass: float = 0.5
    atom_loc: float = 0.5

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        if self.kind == ATOMIC and not (0.0 < self.atom_mass < 1.0):
            raise DomainError("atom mass must lie in (0, 1)")

    def describe(self) -> str:
        if self.kind == ATOMIC:
            return f"atomic:{self.atom_mass:g}@{self.atom_loc:g}"
        return self.kind


def parse_model(text: str) -> ProcessModel:
    """Parse the CLI model syntax: bm-copula, dependent, iid-time, atomic:<mass>@<loc>."""
    raw = text.strip().lower()
    if raw in (BM_COPULA, DEPENDENT, IID_TIME):
        return ProcessModel(raw)
    if raw.startswith("atomic:"):
        body = raw[len("atomic:"):]
        try:
            mass_s, loc_s = body.split("@")
            return ProcessModel(ATOMIC, float(mass_s), float(loc_s))
        except ValueError as exc:
            raise DomainError(f"bad atomic model spec {text!r}") from exc
    raise DomainError(f"unrecognized model spec {text!r}")


@dataclass(frozen=True)
class PathBatch:
    """n sampled paths on a grid; deterministic in (model, grid, n, seed)."""

    model: ProcessModel
    grid: TimeGrid
    n: int
    seed: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.n, len(self.grid)):
            raise DomainError("value matrix shape must be (n, grid size)")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def _brownian_block(grid: TimeGrid, count: int, rng: np.random.Generator) -> np.ndarray:
    pts = grid.points
    dt = np.diff(np.concatenate([[0.0], pts]))
    z = rng.standard_normal((count, pts.size))
    return np.cumsum(z * np.sqrt(dt), axis=1)


def _sample_block(model: ProcessModel, grid: TimeGrid, count: int, seed: int,
                  stream: int, key: tuple[int, ...]) -> np.ndarray:
    rng = parallel.derive_rng(seed, stream, *key)
    m = len(grid)
    if model.kind == BM_COPULA:
        b = _brownian_block(grid, count, rng)
        x = std_normal_cdf(b / np.sqrt(grid.points))
        return np.clip(x, _OPEN_LO, _OPEN_HI)
    if model.kind == DEPENDENT:
        u = rng.random(count)
        return np.repeat(u[:, None], m, axis=1)
    if model.kind == IID_TIME:
        return rng.random((count, m))
    # atomic: one transformed draw per path, constant in time
    df = uniform_atom_mixture(model.atom_mass, model.atom_loc)
    y = df.sample(count, rng)
    rng_v = parallel.derive_rng(seed, parallel.STREAM_RANDOMIZER, *key)
    v = rng_v.random(count)
    u = np.clip(dist_transform(df, y, v), _OPEN_LO, _OPEN_HI)
    return np.repeat(np.asarray(u)[:, None], m, axis=1)


def sample_paths(model: ProcessModel, grid: TimeGrid, n: int, seed: int,
                 workers: int = 1) -> PathBatch:
    """Sample n paths; block-seeded, so identical for every worker count."""
    if n < 1:
        raise DomainError("need n >= 1 paths")
    values = np.empty((n, len(grid)), dtype=float)

    def job(idx, start, stop):
        values[start:stop] = _sample_block(model, grid, stop - start, seed,
                                           parallel.STREAM_PATHS, (idx,))

    parallel.map_blocks(job, n, workers)
    return PathBatch(model, grid, n, seed, values)


def map_path_blocks(model: ProcessModel, grid: TimeGrid, n: int, seed: int,
                    fn: Callable[[np.ndarray], object], workers: int = 1,
                    stream: int = parallel.STREAM_PATHS,
                    extra_key: tuple[int, ...] = ()) -> list:
    """Stream path blocks through ``fn`` without materializing the batch.

    Returns the per-block results ordered by block index.
    """
    def job(idx, start, stop):
        vals = _sample_block(model, grid, stop - start, seed, stream, extra_key + (idx,))
        return fn(vals)

    return parallel.map_blocks(job, n, workers)


def map_brownian_blocks(grid: TimeGrid, n: int, seed: int,
                        fn: Callable[[np.ndarray], object], workers: int = 1,
                        stream: int = parallel.STREAM_PATHS,
                        extra_key: tuple[int, ...] = ()) -> list:
    """Stream raw Brownian path blocks (values B_t at grid times)."""
    def job(idx, start, stop):
        rng = parallel.derive_rng(seed, stream, *extra_key, idx)
        return fn(_brownian_block(grid, stop - start, rng))

    return parallel.map_blocks(job, n, workers)


def joint_cdf(model: ProcessModel, s: float, t: float, x: float, y: float) -> float:
    """P(X_s <= x, X_t <= y) in closed form, when the model has one."""
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError("levels must lie strictly inside (0, 1)")
    if s <= 0.0 or t <= 0.0:
        raise DomainError("times must be positive")
    if model.kind == DEPENDENT:
        return min(x, y)
    if model.kind == IID_TIME:
        return min(x, y) if s == t else x * y
    if model.kind == BM_COPULA:
        if s == t:
            return min(x, y)
        from .numerics import std_normal_quantile
        rho = math.sqrt(min(s, t) / max(s, t))
        return bvn_cdf(std_normal_quantile(x), std_normal_quantile(y), rho)
    raise UnsupportedModelError(f"no closed-form joint CDF for {model.kind}")


def has_joint_cdf(model: ProcessModel) -> bool:
    return model.kind in (DEPENDENT, IID_TIME, BM_COPULA)


def rho_metric(s, t, theta: float):
    """|s - t|^(1/theta); requires theta > 4."""
    if theta <= 4.0:
        raise DomainError("theta must exceed 4")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.abs(s - t) ** (1.0 / theta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnvelopeStatistics:
    """Monte Carlo forward-increment means and the scaled-path sup mean.

    ``m_table`` maps (t, eps) to (estimate, stderr, window_points) where the
    estimate averages, over paths, the grid maximum of (B_s - B_t)/sqrt(s)
    for s in (t, t + eps].  Empty grid windows yield 0 with 0 points.
    ``d_env`` is the mean over paths of max_grid B_t/sqrt(t).
    """

    m_table: dict[tuple[float, float], tuple[float, float, int]]
    d_env: float
    d_env_stderr: float
    n: int
    seed: int

    @property
    def m0_hat(self) -> float:
        """Largest forward-increment mean over the configured table."""
        return max((v[0] for v in self.m_table.values()), default=0.0)


DEFAULT_ENVELOPE_T = (1.0, 1.5, 2.0)
DEFAULT_ENVELOPE_EPS = (1e-3, 0.01, 0.1, 0.25)


def envelope_statistics(grid: TimeGrid, n: int, seed: int,
                        t_values: Sequence[float] = DEFAULT_ENVELOPE_T,
                        eps_values: Sequence[float] = DEFAULT_ENVELOPE_EPS,
                        workers: int = 1,
                        stream: int = parallel.STREAM_PATHS) -> EnvelopeStatistics:
    """Estimate forward-increment suprema means and the scaled-path sup mean."""
    if n < 1000:
        raise DomainError("envelope statistics need n >= 1000")
    pts = grid.points
    sqrt_pts = np.sqrt(pts)
    windows = []
    for t in t_values:
        it = grid.index_of(t)
        for eps in eps_values:
            sel = np.flatnonzero((pts > t) & (pts <= t + eps * (1.0 + 1e-9)))
            windows.append((float(t), float(eps), it, sel))

    def block_stats(b: np.ndarray):
        scaled = b / sqrt_pts
        sums = np.empty(len(windows) + 1)
        sqs = np.empty(len(windows) + 1)
        for j, (_t, _e, it, sel) in enumerate(windows):
            if sel.size == 0:
                sums[j] = 0.0
                sqs[j] = 0.0
                continue
            d = np.max((b[:, sel] - b[:, it][:, None]) / sqrt_pts[sel], axis=1)
            sums[j] = np.sum(d)
            sqs[j] = np.sum(d * d)
        sup = np.max(scaled, axis=1)
        sums[-1] = np.sum(sup)
        sqs[-1] = np.sum(sup * sup)
        return sums, sqs

    parts = map_brownian_blocks(grid, n, seed, block_stats, workers, stream=stream)
    sums = parallel.tree_reduce([p[0] for p in parts], np.add)
    sqs = parallel.tree_reduce([p[1] for p in parts], np.add)

    def mean_stderr(s, sq):
        mean = s / n
        var = max(0.0, (sq - s * s / n) / (n - 1))
        return float(mean), float(math.sqrt(var / n))

    table = {}
    for j, (t, eps, _it, sel) in enumerate(windows):
        mean, se = mean_stderr(sums[j], sqs[j])
        table[(t, eps)] = (mean, se, int(sel.size))
    d_mean, d_se = mean_stderr(sums[-1], sqs[-1])
    return EnvelopeStatistics(table, d_mean, d_se, n, seed)
