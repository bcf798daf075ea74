"""Distribution functions with left limits and the randomized transform.

The randomized distributional transform ``F(x-) + (F(x) - F(x-)) v`` maps a
draw from any distribution function to a uniform variable once ``v`` is an
independent U[0,1] randomizer.  Left limits are computed analytically from
atom bookkeeping, never by numeric limits, so the indicator identities below
hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import parallel
from .errors import DomainError, UnsupportedModelError
from .numerics import ks_statistic_one_sample

# Pass threshold coefficient for uniformity KS tests (roughly the 1% level).
UNIFORMITY_KS_COEFF = 1.63


class DistFn:
    """A distribution function supporting F(x) and F(x-)."""

    strictly_increasing: bool = False

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise UnsupportedModelError(f"{type(self).__name__} cannot be sampled")


@dataclass(frozen=True)
class ContinuousDF(DistFn):
    """Analytic continuous df; F(x-) = F(x)."""

    cdf_fn: Callable[[np.ndarray], np.ndarray]
    sampler: Optional[Callable[[int, np.random.Generator], np.ndarray]] = None
    strictly_increasing: bool = True
    name: str = "continuous"

    def cdf(self, x):
        return np.asarray(self.cdf_fn(np.asarray(x, dtype=float)), dtype=float)

    def cdf_left(self, x):
        return self.cdf(x)

    def sample(self, n, rng):
        if self.sampler is None:
            raise UnsupportedModelError(f"df {self.name!r} has no sampler")
        return np.asarray(self.sampler(n, rng), dtype=float)


@dataclass(frozen=True)
class StepDF(DistFn):
    """Purely atomic df: sorted locations with masses summing to one."""

    locations: tuple[float, ...]
    masses: tuple[float, ...]
    strictly_increasing: bool = field(default=False, init=False)

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float)
        mass = np.asarray(self.masses, dtype=float)
        if locs.size == 0 or locs.size != mass.size:
            raise DomainError("need matching, non-empty locations and masses")
        if np.any(np.diff(locs) <= 0):
            raise DomainError("atom locations must be strictly increasing")
        if np.any(mass <= 0) or abs(float(np.sum(mass)) - 1.0) > 1e-12:
            raise DomainError("atom masses must be positive and sum to 1")

    def _cum(self):
        return np.cumsum(np.asarray(self.masses, dtype=float))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.locations, x, side="right")
        cum = np.concatenate([[0.0], self._cum()])
        return cum[idx]

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.locations, x, side="left")
        cum = np.concatenate([[0.0], self._cum()])
        return cum[idx]

    def sample(self, n, rng):
        return rng.choice(np.asarray(self.locations), size=n, p=np.asarray(self.masses))


@dataclass(frozen=True)
class MixedDF(DistFn):
    """Continuous part with weight 1 - sum(masses) plus finitely many atoms."""

    continuous: ContinuousDF
    atom_locations: tuple[float, ...]
    atom_masses: tuple[float, ...]
    strictly_increasing: bool = field(default=False, init=False)

    def __post_init__(self):
        locs = np.asarray(self.atom_locations, dtype=float)
        mass = np.asarray(self.atom_masses, dtype=float)
        if locs.size != mass.size or locs.size == 0:
            raise DomainError("need matching, non-empty atom locations and masses")
        if np.any(np.diff(locs) <= 0):
            raise DomainError("atom locations must be strictly increasing")
        if np.any(mass <= 0) or float(np.sum(mass)) > 1.0 - 1e-12:
            raise DomainError("atom masses must be positive with sum below 1")

    @property
    def continuous_weight(self) -> float:
        return 1.0 - float(np.sum(self.atom_masses))

    def _step(self, x, side):
        idx = np.searchsorted(self.atom_locations, x, side=side)
        cum = np.concatenate([[0.0], np.cumsum(np.asarray(self.atom_masses, dtype=float))])
        return cum[idx]

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.continuous_weight * self.continuous.cdf(x) + self._step(x, "right")

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        return self.continuous_weight * self.continuous.cdf(x) + self._step(x, "left")

    def sample(self, n, rng):
        # one selector draw, one value draw, fixed order for determinism
        sel = rng.random(n)
        cont = self.continuous.sample(n, rng)
        out = cont.copy()
        cuts = np.concatenate([[0.0], np.cumsum(np.asarray(self.atom_masses, dtype=float))])
        for j, loc in enumerate(self.atom_locations):
            hit = (sel >= cuts[j]) & (sel < cuts[j + 1])
            out[hit] = loc
        return out


def uniform_df() -> ContinuousDF:
    """U(0, 1) distribution function."""
    return ContinuousDF(
        cdf_fn=lambda x: np.clip(x, 0.0, 1.0),
        sampler=lambda n, rng: rng.random(n),
        name="uniform",
    )


def normal_df(scale: float = 1.0) -> ContinuousDF:
    """N(0, scale^2) distribution function, i.e. Phi(x / scale)."""
    from .numerics import std_normal_cdf
    if scale <= 0:
        raise DomainError("scale must be positive")
    return ContinuousDF(
        cdf_fn=lambda x: std_normal_cdf(np.asarray(x, dtype=float) / scale),
        sampler=lambda n, rng: scale * rng.standard_normal(n),
        name=f"normal({scale:g})",
    )


def point_mass(loc: float) -> StepDF:
    return StepDF((float(loc),), (1.0,))


def uniform_atom_mixture(mass: float, loc: float) -> MixedDF:
    """(1 - mass) U(0,1) plus an atom of the given mass at loc."""
    if not (0.0 < mass < 1.0):
        raise DomainError("atom mass must lie in (0, 1)")
    return MixedDF(uniform_df(), (float(loc),), (float(mass),))


def dist_transform(F: DistFn, x, v):
    """F(x-) + (F(x) - F(x-)) v, exactly; equals F(x) for continuous F."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise DomainError("randomizer values must lie in [0, 1]")
    left = F.cdf_left(x)
    right = F.cdf(x)
    out = left + (right - left) * v
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OrderCheckReport:
    passed: bool
    # (clause, x, y, v) for each violated probe
    failures: tuple[tuple[str, float, float, float], ...]


def check_order_properties(F: DistFn, probe_pairs: Sequence[tuple[float, float, float]]) -> OrderCheckReport:
    """Verify the order properties of the transform on probe triples (x, y, v).

    Checked clauses: the transform never exceeds F; F(x) <= transform(y) for
    x < y, strictly so for strictly increasing F; and monotonicity of the
    transform in its argument at fixed v.
    """
    failures = []
    tol = 1e-12
    for x, y, v in probe_pairs:
        tx = float(dist_transform(F, x, v))
        ty = float(dist_transform(F, y, v))
        fx = float(np.asarray(F.cdf(x)))
        if tx > fx + tol:
            failures.append(("transform<=F", x, y, v))
        if x < y and fx > ty + tol:
            failures.append(("F(x)<=transform(y)", x, y, v))
        if x <= y and tx > ty + tol:
            failures.append(("transform monotone", x, y, v))
        if x < y and F.strictly_increasing and not (fx < ty):
            failures.append(("strict F(x)<transform(y)", x, y, v))
    return OrderCheckReport(not failures, tuple(failures))


@dataclass(frozen=True)
class UniformityResult:
    ks: float
    threshold: float
    passed: bool
    n: int
    seed: int


def uniformity_test(F: DistFn, n: int, seed: int, v_constant: Optional[float] = None) -> UniformityResult:
    """KS test of transform(X, V) against U(0, 1).

    X and V come from independent substreams of the same seed.  Passing
    ``v_constant`` freezes the randomizer (a deliberately broken transform,
    for negative controls).
    """
    if n < 100:
        raise DomainError("uniformity test needs n >= 100")
    rng_x = parallel.derive_rng(seed, parallel.STREAM_PATHS)
    rng_v = parallel.derive_rng(seed, parallel.STREAM_RANDOMIZER)
    x = F.sample(n, rng_x)
    if v_constant is None:
        v = rng_v.random(n)
    else:
        if not (0.0 <= v_constant <= 1.0):
            raise DomainError("v_constant must lie in [0, 1]")
        v = np.full(n, float(v_constant))
    u = dist_transform(F, x, v)
    ks = ks_statistic_one_sample(u, lambda t: np.clip(t, 0.0, 1.0))
    threshold = UNIFORMITY_KS_COEFF / math.sqrt(n)
    return UniformityResult(ks, threshold, ks < threshold, n, seed)


def copula_indicator_identity(F: DistFn, samples: Sequence[tuple[float, float]],
                              y_probes: Sequence[float]) -> int:
    """Count probes where 1{x <= y} differs from 1{transform(x,v) <= F(y)}.

    Requires a strictly increasing df; with atoms the identity only holds
    almost surely and the check is rejected.
    """
    if not F.strictly_increasing:
        raise DomainError("identity check requires a strictly increasing df")
    pairs = np.asarray(samples, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DomainError("samples must be (x, v) pairs")
    xs = pairs[:, 0]
    vs = pairs[:, 1]
    ys = np.asarray(y_probes, dtype=float)
    u = dist_transform(F, xs, vs)
    fy = np.asarray(F.cdf(ys), dtype=float)
    left = xs[:, None] <= ys[None, :]
    right = u[:, None] <= fy[None, :]
    return int(np.sum(left != right))
