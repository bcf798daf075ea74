"""Weight functions on (0, 1), symmetric about 1/2.

A weight is ``w(x) = x^(-alpha) * L(x)`` on (0, 1/2] (reflected above 1/2)
with exponent ``alpha`` in [0, 1/2) and a slowly varying factor ``L`` from a
closed family: a positive constant, the log-power ``(1 + ln(1/x))^beta``, or
``exp(c * sqrt(ln(1/x)))``.  Closed enumeration keeps the monotonicity
window and the exponent analyzable; an unchecked escape hatch exists for
negative tests and is clearly flagged.

Construction validates, on a geometric grid inside the window (0, gamma),
that ``w`` is non-increasing and ``x w(x)^2`` is non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .numerics import singular_quadrature

SV_CONST = "const"
SV_LOGPOW = "logpow"
SV_EXPSQRT = "expsqrt"
SV_KINDS = (SV_CONST, SV_LOGPOW, SV_EXPSQRT)

# Validation grid: geometric, cheap, catches every violation the closed
# family can produce.
VALIDATION_POINTS = 512


def _auto_gamma(alpha: float, sv_kind: str, sv_param: float) -> float:
    """Largest default window on which both monotonicity conditions hold.

    Derived per family from the sign of d/dx log(x w(x)^2); shrunk by a
    safety factor so the numeric validation passes away from the boundary.
    """
    if sv_kind == SV_CONST:
        # both conditions hold on all of (0, 1/2); a constant weight keeps
        # the full half-interval so tail integrals run over (0, 1/2]
        return 0.5 if alpha == 0.0 else 0.25
    if sv_kind == SV_LOGPOW:
        if sv_param == 0.0:
            return 0.5 if alpha == 0.0 else 0.25
        # x w(x)^2 non-decreasing needs 1 + ln(1/x) >= 2 beta / (1 - 2 alpha)
        bound = math.exp(1.0 - 2.0 * sv_param / (1.0 - 2.0 * alpha))
        return min(0.25, 0.75 * bound)
    if sv_kind == SV_EXPSQRT:
        # x w(x)^2 non-decreasing needs sqrt(ln(1/x)) >= c / (1 - 2 alpha)
        bound = math.exp(-((sv_param / (1.0 - 2.0 * alpha)) ** 2))
        return min(0.25, 0.75 * bound)
    raise DomainError(f"unknown slowly varying kind {sv_kind!r}")


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    # (x_left, x_right, condition) for the first violated pair, else None
    violation: Optional[tuple[float, float, str]] = None


@dataclass(frozen=True)
class WeightSpec:
    """Immutable weight function specification.

    ``alpha`` is the blow-up exponent at 0 (0 means a bounded weight),
    ``sv_kind``/``sv_param`` select the slowly varying factor, ``gamma`` is
    the monotonicity window bound.  ``unchecked=True`` skips construction
    validation and admits out-of-range exponents for negative tests.
    """

    alpha: float = 0.0
    sv_kind: str = SV_CONST
    sv_param: float = 1.0
    gamma: Optional[float] = None
    unchecked: bool = False

    def __post_init__(self):
        if self.sv_kind not in SV_KINDS:
            raise DomainError(f"unknown slowly varying kind {self.sv_kind!r}")
        if not self.unchecked:
            if not (0.0 <= self.alpha < 0.5):
                raise DomainError("exponent must lie in [0, 1/2)")
            if self.sv_kind == SV_CONST and self.sv_param <= 0.0:
                raise DomainError("constant factor must be positive")
            if self.sv_kind == SV_LOGPOW and self.sv_param < 0.0:
                raise DomainError("log-power exponent must be non-negative")
            if self.sv_kind == SV_EXPSQRT and self.sv_param <= 0.0:
                raise DomainError("exp-sqrt-log coefficient must be positive")
        if self.gamma is None:
            if self.unchecked:
                object.__setattr__(self, "gamma", 0.25)
            else:
                object.__setattr__(self, "gamma", _auto_gamma(self.alpha, self.sv_kind, self.sv_param))
        if not (0.0 < self.gamma <= 0.5):
            raise DomainError("gamma must lie in (0, 1/2]")
        if not self.unchecked:
            report = validate_monotonicity(self, VALIDATION_POINTS)
            if not report.passed:
                raise DomainError(
                    f"weight violates the monotonicity window at {report.violation}")

    # -- evaluation ------------------------------------------------------

    def _base(self, u: np.ndarray) -> np.ndarray:
        """w on arguments already folded into (0, 1/2]."""
        u = np.asarray(u, dtype=float)
        if self.sv_kind == SV_CONST:
            sv = np.full(u.shape, float(self.sv_param))
        elif self.sv_kind == SV_LOGPOW:
            sv = (1.0 + np.log(1.0 / u)) ** self.sv_param
        else:
            sv = np.exp(self.sv_param * np.sqrt(np.log(1.0 / u)))
        if self.alpha == 0.0:
            return sv
        return u ** (-self.alpha) * sv

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise DomainError("weight argument must lie strictly inside (0, 1)")
        u = np.minimum(x, 1.0 - x)
        out = self._base(u)
        return float(out) if out.ndim == 0 else out

    def describe(self) -> str:
        if self.sv_kind == SV_CONST and self.alpha == 0.0:
            return f"const:{self.sv_param:g}"
        if self.sv_kind == SV_CONST:
            core = f"pow:{self.alpha:g}"
            return core if self.sv_param == 1.0 else f"{core}*{self.sv_param:g}"
        tag = "logpow" if self.sv_kind == SV_LOGPOW else "expsqrt"
        return f"pow:{self.alpha:g}:{tag}:{self.sv_param:g}"


def weight_eval(w: WeightSpec, x):
    """Evaluate w(x), reflecting x > 1/2."""
    return w(x)


def slowly_varying_eval(w: WeightSpec, x):
    """The slowly varying factor L(x) alone, on (0, 1)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError("argument must lie strictly inside (0, 1)")
    if w.sv_kind == SV_CONST:
        out = np.full_like(x, w.sv_param)
    elif w.sv_kind == SV_LOGPOW:
        out = (1.0 + np.log(1.0 / x)) ** w.sv_param
    else:
        out = np.exp(w.sv_param * np.sqrt(np.log(1.0 / x)))
    return float(out) if out.ndim == 0 else out


def validate_monotonicity(w: WeightSpec, grid_points: int = VALIDATION_POINTS) -> MonotonicityReport:
    """Check w non-increasing and x w(x)^2 non-decreasing on (0, gamma).

    Uses a geometric grid on (gamma * 1e-8, gamma); returns the first
    violating pair instead of raising.
    """
    if grid_points < 2:
        raise DomainError("grid must have at least 2 points")
    xs = np.geomspace(w.gamma * 1e-8, w.gamma, grid_points)
    # fold manually: the grid lies below 1/2 already
    wv = w._base(xs)
    xw2 = xs * wv * wv
    slack = 1e-12
    for i in range(len(xs) - 1):
        if wv[i + 1] > wv[i] * (1.0 + slack):
            return MonotonicityReport(False, (float(xs[i]), float(xs[i + 1]), "w non-increasing"))
        if xw2[i + 1] < xw2[i] * (1.0 - slack):
            return MonotonicityReport(False, (float(xs[i]), float(xs[i + 1]), "x*w^2 non-decreasing"))
    return MonotonicityReport(True, None)


@dataclass(frozen=True)
class IntegralEntry:
    c: float
    finite: bool
    value: float      # the integral when finite, else the partial sum
    error: float


@dataclass(frozen=True)
class IntegralVerdict:
    entries: tuple[IntegralEntry, ...]

    def finite_for(self, c: float) -> bool:
        for e in self.entries:
            if e.c == c:
                return e.finite
        raise KeyError(c)


def integral_condition(w: WeightSpec, c_values: Sequence[float], tol: float = 1e-9) -> IntegralVerdict:
    """Classify int_0^gamma s^-1 exp(-c / (s w(s)^2)) ds per tested c > 0.

    A non-convergent quadrature becomes the verdict "divergent"; it never
    raises.
    """
    if len(c_values) == 0:
        raise DomainError("need at least one c value")
    entries = []
    for c in c_values:
        c = float(c)
        if c <= 0.0:
            raise DomainError("c values must be positive")

        def integrand(s, _c=c):
            s = np.asarray(s, dtype=float)
            wv = w._base(s)
            return np.exp(-_c / (s * wv * wv)) / s

        res = singular_quadrature(integrand, w.gamma, tol)
        finite = bool(res.converged and res.error < tol)
        entries.append(IntegralEntry(c, finite, res.value, res.error))
    return IntegralVerdict(tuple(entries))


@dataclass(frozen=True)
class DyadicSum:
    partial_sum: float
    ratio: float
    terms: int


def dyadic_sum(w: WeightSpec, theta: float, terms: int) -> DyadicSum:
    """Partial sum of 1/w(2^-k theta)^2 and its ratio to 1/w(theta)^2.

    Requires a nonzero exponent: for alpha = 0 the series diverges and the
    dyadic bound does not apply.
    """
    if w.alpha <= 0.0:
        raise DomainError("dyadic sum requires a nonzero blow-up exponent")
    if not (0.0 < theta < w.gamma):
        raise DomainError("theta must lie in (0, gamma)")
    if terms < 1:
        raise DomainError("need at least one term")
    if terms > 1024:
        raise DomainError("terms capped at 1024 (arguments underflow beyond)")
    k = np.arange(terms, dtype=float)
    args = theta * np.exp2(-k)
    if args[-1] <= 0.0:
        raise DomainError("theta * 2^-k underflowed; reduce terms")
    wv = w._base(args)
    partial = float(np.sum(1.0 / (wv * wv)))
    w_theta = float(w._base(np.asarray(theta)))
    return DyadicSum(partial, partial * w_theta * w_theta, terms)


def parse_weight(text: str, gamma: Optional[float] = None, unchecked: bool = False) -> WeightSpec:
    """Parse the CLI weight syntax, case-insensitively.

    Accepted forms: ``const:<v>``, ``pow:<alpha>``,
    ``pow:<alpha>:logpow:<beta>``, ``pow:<alpha>:expsqrt:<c>``.
    """
    parts = [p.strip() for p in text.strip().lower().split(":")]
    try:
        if parts[0] == "const" and len(parts) == 2:
            return WeightSpec(0.0, SV_CONST, float(parts[1]), gamma, unchecked)
        if parts[0] == "pow" and len(parts) == 2:
            return WeightSpec(float(parts[1]), SV_CONST, 1.0, gamma, unchecked)
        if parts[0] == "pow" and len(parts) == 4 and parts[2] in (SV_LOGPOW, SV_EXPSQRT):
            return WeightSpec(float(parts[1]), parts[2], float(parts[3]), gamma, unchecked)
    except ValueError as exc:
        raise DomainError(f"bad numeric field in weight spec {text!r}: {exc}") from exc
    raise DomainError(f"unrecognized weight spec {text!r}")
