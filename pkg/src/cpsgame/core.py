"""Game instances, allocations, analytic solution concepts, and inefficiency.

The content production and sharing (CPS) game has three stages: each peer
produces content, announces how much of it to share, and then downloads from
the other peers' shared amounts. A peer's utility is the benefit of the
content it ends up with minus linear production, download, and upload costs:

    v_i = f(x_i + d_i) - kappa * x_i - delta * d_i - sigma * u_i

where ``d_i`` / ``u_i`` are peer i's download / upload volumes. This module
solves the game's analytic outcomes (self-enforcing play, Pareto-efficient
cooperation, enforced sharing levels, enforced full sharing) and computes the
welfare ratios comparing them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .benefit import BenefitSpec, conjugate, maximizer

# Absolute slack absorbed by feasibility checks (round-off in z[j][i] = x_i).
FEASIBILITY_ATOL = 1e-9

CONCEPTS = ("SE", "PE", "EnforcedLevels", "FullSharing")


@dataclass(frozen=True)
class CpsParams:
    """One CPS game instance: peer count, benefit function, marginal costs.

    ``kappa`` (production) must exceed ``delta + sigma`` (download plus
    upload), otherwise the network is not worth using, and the marginal
    benefit at zero must exceed ``kappa`` so that autarkic production is
    positive.
    """

    n_peers: int
    benefit: BenefitSpec
    kappa: float
    delta: float
    sigma: float

    def __post_init__(self) -> None:
        if not isinstance(self.n_peers, int) or self.n_peers < 1:
            raise ValueError("n_peers must be an integer >= 1")
        for name in ("kappa", "delta", "sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.kappa > self.delta + self.sigma:
            raise ValueError("need kappa > delta + sigma for the network to be socially valuable")
        self.benefit.validate()
        if not self.benefit.deriv_at_zero > self.kappa:
            raise ValueError("marginal benefit at zero must exceed kappa")


def shared_unit_cost(params: CpsParams, n: int | None = None) -> float:
    """Per-capita marginal cost of supplying one unit to an n-peer sharing group.

    One peer produces the unit (``kappa``) and uploads it to the other n - 1
    peers, each of whom downloads it (``(n-1) * (delta + sigma)`` in total);
    dividing by n gives the cost per member.
    """
    n = params.n_peers if n is None else n
    return params.kappa / n + (n - 1) * (params.delta + params.sigma) / n


def full_sharing_unit_cost(params: CpsParams, n: int | None = None) -> float:
    """Effective marginal production cost when every produced unit must be shared.

    Producing a unit in an n-peer group under mandatory sharing means paying
    ``kappa`` plus the upload cost to the other n - 1 peers.
    """
    n = params.n_peers if n is None else n
    return params.kappa + (n - 1) * params.sigma


def autarky_production(params: CpsParams) -> float:
    """Production of a peer acting alone (marginal benefit = kappa)."""
    return maximizer(params.benefit, params.kappa)


def pareto_total_production(params: CpsParams) -> float:
    """Group-wide production at the welfare optimum (marginal benefit = shared cost)."""
    return maximizer(params.benefit, shared_unit_cost(params))


def full_sharing_total_production(params: CpsParams) -> float:
    """Equilibrium total production under enforced full sharing.

    Zero once the effective production cost reaches the marginal benefit at
    zero, which happens in large groups.
    """
    return maximizer(params.benefit, full_sharing_unit_cost(params))


class Allocation:
    """A production/sharing/transfer profile.

    ``x[i]`` is peer i's production, ``y[i]`` how much of it is shared, and
    ``z[i][j]`` how much peer i downloads from peer j. Feasibility requires
    ``y[i] <= x[i]``, a zero diagonal, and ``z[i][j] <= y[j]``.
    """

    __slots__ = ("x", "y", "z")

    def __init__(self, x, y, z) -> None:
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.z = np.asarray(z, dtype=float)

    def __repr__(self) -> str:
        return f"Allocation(x={self.x!r}, y={self.y!r}, z=<{self.z.shape} matrix>)"

    @staticmethod
    def zeros(n: int) -> "Allocation":
        return Allocation(np.zeros(n), np.zeros(n), np.zeros((n, n)))

    @property
    def n_peers(self) -> int:
        return self.x.shape[0]

    def downloads(self) -> np.ndarray:
        return self.z.sum(axis=1)

    def uploads(self) -> np.ndarray:
        return self.z.sum(axis=0)

    def transfer_volume(self) -> float:
        return float(self.z.sum())

    def validate(self) -> None:
        """Raise ``ValueError`` naming the first violated feasibility constraint."""
        n = self.n_peers
        if self.y.shape != (n,) or self.z.shape != (n, n):
            raise ValueError(f"shape mismatch: x {self.x.shape}, y {self.y.shape}, z {self.z.shape}")
        for name, arr in (("x", self.x), ("y", self.y), ("z", self.z)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            if np.any(arr < -FEASIBILITY_ATOL):
                idx = np.argwhere(arr < -FEASIBILITY_ATOL)[0]
                raise ValueError(f"{name}{tuple(idx)} is negative")
        over = np.argwhere(self.y > self.x + FEASIBILITY_ATOL)
        if over.size:
            i = int(over[0][0])
            raise ValueError(f"peer {i} shares more than it produces (y={self.y[i]} > x={self.x[i]})")
        diag = np.abs(np.diag(self.z))
        if np.any(diag > FEASIBILITY_ATOL):
            i = int(np.argmax(diag))
            raise ValueError(f"peer {i} downloads from itself (z[{i}][{i}] != 0)")
        cap = self.z - self.y[None, :]
        np.fill_diagonal(cap, 0.0)
        over = np.argwhere(cap > FEASIBILITY_ATOL)
        if over.size:
            i, j = (int(v) for v in over[0])
            raise ValueError(
                f"peer {i} downloads more than peer {j} shares (z[{i}][{j}]={self.z[i, j]} > y={self.y[j]})"
            )


def utilities(params: CpsParams, alloc: Allocation) -> np.ndarray:
    """Per-peer utilities of a feasible allocation."""
    if alloc.n_peers != params.n_peers:
        raise ValueError("allocation size does not match n_peers")
    alloc.validate()
    d = alloc.downloads()
    u = alloc.uploads()
    benefit = np.asarray(params.benefit.eval(alloc.x + d), dtype=float)
    return benefit - params.kappa * alloc.x - params.delta * d - params.sigma * u


def utility(params: CpsParams, alloc: Allocation, peer: int) -> float:
    """Utility of one peer; rejects infeasible allocations."""
    if not 0 <= peer < params.n_peers:
        raise ValueError(f"peer index {peer} out of range")
    return float(utilities(params, alloc)[peer])


def total_utility(params: CpsParams, alloc: Allocation) -> float:
    return float(utilities(params, alloc).sum())


@dataclass(frozen=True, eq=False)
class SolutionReport:
    """An allocation together with its utilities and headline aggregates."""

    allocation: Allocation
    utilities: np.ndarray
    total_utility: float
    transfer_volume: float
    concept: str


def _report(params: CpsParams, alloc: Allocation, concept: str) -> SolutionReport:
    assert concept in CONCEPTS
    v = utilities(params, alloc)
    return SolutionReport(
        allocation=alloc,
        utilities=v,
        total_utility=float(v.sum()),
        transfer_volume=alloc.transfer_volume(),
        concept=concept,
    )


def _validated_split(params: CpsParams, split: Sequence[float] | None) -> np.ndarray:
    if split is None:
        return np.full(params.n_peers, 1.0 / params.n_peers)
    w = np.asarray(split, dtype=float)
    if w.shape != (params.n_peers,):
        raise ValueError(f"split must have length {params.n_peers}")
    if np.any(w < 0):
        raise ValueError("split weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > 1e-12:
        raise ValueError("split weights must sum to 1")
    return w


def solve_noncooperative(params: CpsParams) -> SolutionReport:
    """Self-enforcing outcome without any incentive scheme.

    Sharing only creates upload costs for the sharer, so nothing is shared;
    each peer produces its autarkic optimum and the network goes unused.
    """
    n = params.n_peers
    x = np.full(n, autarky_production(params))
    alloc = Allocation(x, np.zeros(n), np.zeros((n, n)))
    return _report(params, alloc, "SE")


def _full_sharing_allocation(params: CpsParams, x: np.ndarray) -> Allocation:
    """Everyone shares all production and downloads everything others share."""
    z = np.tile(x, (params.n_peers, 1))
    np.fill_diagonal(z, 0.0)
    return Allocation(x, x.copy(), z)


def solve_pareto(params: CpsParams, split: Sequence[float] | None = None) -> SolutionReport:
    """Welfare-maximizing allocation, with production divided per ``split``.

    Cooperation maximizes total utility exactly when all produced content is
    shared and downloaded by everyone and total production equates the
    marginal benefit with the per-capita supply cost. The optimum pins down
    only the total; the division across peers is the caller's choice and
    defaults to the equal split (which is also the fair division of the
    cooperative surplus).
    """
    w = _validated_split(params, split)
    x = w * pareto_total_production(params)
    return _report(params, _full_sharing_allocation(params, x), "PE")


def solve_enforced_levels(params: CpsParams, y_e: Sequence[float]) -> SolutionReport:
    """Self-enforcing outcome when only the sharing levels are mandated.

    With enforced sharing levels summing to at least the autarkic optimum and
    at most the download-saturation level, peers produce exactly what they
    must share and download everything shared by others.
    """
    y = np.asarray(y_e, dtype=float)
    if y.shape != (params.n_peers,):
        raise ValueError(f"y_e must have length {params.n_peers}")
    if np.any(y < 0):
        raise ValueError("enforced sharing levels must be nonnegative")
    total = float(y.sum())
    lo = autarky_production(params)
    hi = maximizer(params.benefit, params.delta)
    if total < lo - FEASIBILITY_ATOL:
        raise ValueError(
            f"sum of enforced sharing levels {total} is below the autarkic production {lo}"
        )
    if total > hi + FEASIBILITY_ATOL:
        raise ValueError(
            f"sum of enforced sharing levels {total} exceeds the download-saturation level {hi}"
        )
    return _report(params, _full_sharing_allocation(params, y.copy()), "EnforcedLevels")


def solve_full_sharing(params: CpsParams, split: Sequence[float] | None = None) -> SolutionReport:
    """Self-enforcing outcome when sharing everything produced is mandated.

    Mandatory sharing raises the effective production cost by the upload to
    the other peers, so equilibrium total production shrinks (to zero in
    large groups) even though whatever is produced circulates fully.
    """
    w = _validated_split(params, split)
    x = w * full_sharing_total_production(params)
    return _report(params, _full_sharing_allocation(params, x), "FullSharing")


@dataclass(frozen=True)
class InefficiencyMetrics:
    """Welfare ratios between the three regimes.

    ``poa`` compares self-enforcing play with cooperation, ``pons``
    self-enforcing play with enforced full sharing (``inf`` when enforced
    full sharing yields zero production), and ``pou`` enforced full sharing
    with cooperation. Whenever finite, ``poa = pons * pou``.
    """

    poa: float
    pons: float
    pou: float


def inefficiency(params: CpsParams) -> InefficiencyMetrics:
    """Compute the three welfare ratios for one game instance."""
    nc = conjugate(params.benefit, params.kappa)
    pe = conjugate(params.benefit, shared_unit_cost(params))
    x_fs = full_sharing_total_production(params)
    fs = float(params.benefit.eval(x_fs)) - shared_unit_cost(params) * x_fs
    pons = math.inf if fs <= 0 else nc / fs
    return InefficiencyMetrics(poa=nc / pe, pons=pons, pou=fs / pe)
