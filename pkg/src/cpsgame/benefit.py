"""Concave consumption-benefit functions, their maximizers, and conjugates.

A benefit function maps an amount of consumed content to utility. Everything
downstream (equilibrium production levels, welfare comparisons, prices) is
driven by two derived quantities:

* ``maximizer(f, alpha)`` -- the consumption level at which the marginal
  benefit equals a unit cost ``alpha`` (the optimal amount of content to
  acquire when each unit costs ``alpha``), and
* ``conjugate(f, alpha)`` -- the utility obtained at that optimum,
  ``sup_{x >= 0} { f(x) - alpha * x }``.

Two concrete benefit functions are provided: the natural-log benefit
``ln(1 + c)`` and the distinct-files benefit that arises when content is
drawn with replacement from a finite catalogue and only distinct items are
valuable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Absolute tolerance on the bisection root of f'(x) = alpha.
ROOT_ATOL = 1e-10

# Probe point used to check that the marginal benefit vanishes at infinity.
_TAIL_PROBE = 1e9


@dataclass(frozen=True)
class BenefitSpec:
    """A concave benefit function given as a (value, derivative) pair.

    ``eval`` and ``deriv`` must accept nonnegative floats; the bundled
    instances also accept numpy arrays elementwise. ``deriv_at_zero`` is the
    (finite) right derivative at zero, which bounds the unit costs at which
    acquiring any content is worthwhile.
    """

    eval: Callable[[float], float]
    deriv: Callable[[float], float]
    deriv_at_zero: float
    label: str = "custom"

    def validate(self) -> None:
        """Spot-check the concavity assumptions on a sample grid.

        Raises ``ValueError`` if the function visibly violates f(0) = 0,
        positivity / strict decrease of the derivative, the vanishing tail,
        or midpoint concavity.
        """
        if not math.isfinite(self.deriv_at_zero) or self.deriv_at_zero <= 0:
            raise ValueError("deriv_at_zero must be a finite positive number")
        if abs(float(self.eval(0.0))) > 1e-12:
            raise ValueError("benefit must satisfy eval(0) = 0")
        grid = [1e-6, 1e-3, 0.1, 1.0, 3.0, 10.0, 100.0, 1e4]
        derivs = [float(self.deriv(c)) for c in grid]
        if any(d <= 0 for d in derivs):
            raise ValueError("marginal benefit must be strictly positive")
        if any(b >= a for a, b in zip(derivs, derivs[1:])):
            raise ValueError("marginal benefit must be strictly decreasing")
        if float(self.deriv(_TAIL_PROBE)) >= 1e-6 * self.deriv_at_zero:
            raise ValueError("marginal benefit must vanish for large consumption")
        for c1, c2 in [(0.0, 1.0), (0.5, 4.0), (2.0, 50.0)]:
            mid = 0.5 * (c1 + c2)
            chord = 0.5 * (float(self.eval(c1)) + float(self.eval(c2)))
            if float(self.eval(mid)) < chord - 1e-9:
                raise ValueError("benefit must be concave")


@dataclass(frozen=True)
class DistinctFilesParams:
    """Parameters of the finite-catalogue benefit.

    ``per_file_benefit`` is the utility of one distinct file and
    ``total_files`` the catalogue size. Drawing content uniformly with
    replacement, the expected number of distinct files among ``c`` draws is
    ``total_files * (1 - (1 - 1/total_files)**c)``.
    """

    per_file_benefit: float
    total_files: int

    def __post_init__(self) -> None:
        if self.per_file_benefit <= 0:
            raise ValueError("per_file_benefit must be positive")
        if not isinstance(self.total_files, int) or self.total_files < 1:
            raise ValueError("total_files must be a positive integer")
        if self.total_files == 1:
            # (1 - 1/M) = 0 leaves the marginal benefit undefined.
            raise ValueError("total_files must be at least 2")


def log_benefit() -> BenefitSpec:
    """Natural-log benefit ``f(c) = ln(1 + c)`` with ``f'(c) = 1/(1+c)``."""
    return BenefitSpec(
        eval=np.log1p,
        deriv=lambda c: 1.0 / (1.0 + c),  # scalar stays a plain float; arrays broadcast
        deriv_at_zero=1.0,
        label="log",
    )


def distinct_files_benefit(p: DistinctFilesParams) -> BenefitSpec:
    """Expected-distinct-files benefit for a finite content catalogue.

    ``f(c) = a * M * (1 - (1 - 1/M)**c)`` with ``a = per_file_benefit`` and
    ``M = total_files``, treating the number of draws ``c`` as a nonnegative
    real.
    """
    a = p.per_file_benefit
    m = float(p.total_files)
    log_keep = math.log1p(-1.0 / m)  # ln(1 - 1/M) < 0

    def _eval(c):
        return -a * m * np.expm1(np.asarray(c, dtype=float) * log_keep)

    def _deriv(c):
        return -a * m * log_keep * np.exp(np.asarray(c, dtype=float) * log_keep)

    return BenefitSpec(
        eval=_eval,
        deriv=_deriv,
        deriv_at_zero=-a * m * log_keep,
        label=f"distinct_files(a={a}, M={p.total_files})",
    )


def maximizer(benefit: BenefitSpec, alpha: float) -> float:
    """Consumption level at which the marginal benefit equals ``alpha``.

    Solves ``f'(x) = alpha`` by bisection to absolute tolerance ``ROOT_ATOL``.
    When ``alpha`` is at or above the marginal benefit at zero, no positive
    consumption is worthwhile and 0 is returned, so the same operation covers
    clamped regimes such as enforced full sharing with a prohibitive unit
    cost. The returned value maximizes ``f(x) - alpha * x`` over ``x >= 0``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha >= benefit.deriv_at_zero:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if float(benefit.deriv(hi)) < alpha:
            break
        hi *= 2.0
    else:
        raise ValueError("marginal benefit does not fall below alpha; not a valid benefit")
    lo = 0.0
    while hi - lo > ROOT_ATOL:
        mid = 0.5 * (lo + hi)
        if float(benefit.deriv(mid)) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def conjugate(benefit: BenefitSpec, alpha: float) -> float:
    """Value of acquiring content optimally at unit cost ``alpha``.

    ``sup_{x >= 0} { f(x) - alpha * x }``; nonnegative and decreasing in
    ``alpha``, reaching 0 once ``alpha >= f'(0)``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = maximizer(benefit, alpha)
    return float(benefit.eval(x)) - alpha * x
