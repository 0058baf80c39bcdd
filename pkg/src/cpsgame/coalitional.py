"""Coalitional analysis: characteristic functions, core, Shapley value.

Because peers are homogeneous, the value a coalition can create depends only
on its size: ``n`` peers sharing everything they produce achieve a best
average utility of ``conjugate(shared_unit_cost(n))`` per member. The
resulting coalitional game is convex, its core is the convex hull of the
marginal-product vectors under all arrival orders, and the Shapley value
splits the grand-coalition value equally.

A second game covers mandated full sharing with endogenous group formation:
peers organize into groups of the size that maximizes average utility, and
the corresponding core is either a single symmetric profile or empty.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .benefit import conjugate, maximizer
from .core import (
    CpsParams,
    full_sharing_unit_cost,
    pareto_total_production,
    shared_unit_cost,
)

# Permutation enumeration blows up factorially; beyond this use is_in_core.
MAX_VERTEX_PEERS = 8
# Exhaustive 2^N membership checks stay cheap up to this size.
MAX_EXHAUSTIVE_PEERS = 12


@dataclass(frozen=True)
class ScaleTables:
    """Group-size scalings of costs and achievable utilities, for n = 1..n_max.

    ``shared_cost[n]`` is the per-capita cost of supplying a unit to an
    n-peer sharing group, ``full_sharing_cost[n]`` the effective production
    cost under mandated sharing, ``avg_utility[n]`` / ``total_utility[n]``
    the best average / total utility an n-peer group can reach,
    ``marginal_product[n]`` the increase in total utility from the n-th
    member joining, and ``avg_utility_fs[n]`` the equilibrium average
    utility under mandated full sharing.
    """

    n_max: int
    shared_cost: dict[int, float]
    full_sharing_cost: dict[int, float]
    avg_utility: dict[int, float]
    total_utility: dict[int, float]
    marginal_product: dict[int, float]
    avg_utility_fs: dict[int, float]


def avg_utility_full_sharing(params: CpsParams, n: int) -> float:
    """Equilibrium average individual utility of an n-peer full-sharing group."""
    if n < 1:
        raise ValueError("group size must be >= 1")
    x = maximizer(params.benefit, full_sharing_unit_cost(params, n))
    return float(params.benefit.eval(x)) - shared_unit_cost(params, n) * x


def scale_tables(params: CpsParams, n_max: int) -> ScaleTables:
    """Populate all group-size tables for n = 1..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    shared = {n: shared_unit_cost(params, n) for n in range(1, n_max + 1)}
    full = {n: full_sharing_unit_cost(params, n) for n in range(1, n_max + 1)}
    avg = {n: conjugate(params.benefit, shared[n]) for n in range(1, n_max + 1)}
    tot = {n: n * avg[n] for n in range(1, n_max + 1)}
    mp = {1: tot[1]}
    for n in range(2, n_max + 1):
        mp[n] = tot[n] - tot[n - 1]
    avg_fs = {n: avg_utility_full_sharing(params, n) for n in range(1, n_max + 1)}
    return ScaleTables(
        n_max=n_max,
        shared_cost=shared,
        full_sharing_cost=full,
        avg_utility=avg,
        total_utility=tot,
        marginal_product=mp,
        avg_utility_fs=avg_fs,
    )


@dataclass(frozen=True)
class CoalitionValueFn:
    """Characteristic function of a symmetric coalitional game.

    The value of a coalition depends only on how many peers it contains, so
    the function is stored as a per-size table.
    """

    n_peers: int
    size_values: tuple[float, ...]  # index s = coalition size, entry 0 is the empty coalition

    def value(self, coalition: Iterable[int]) -> float:
        members = frozenset(coalition)
        if any(not 0 <= i < self.n_peers for i in members):
            raise ValueError("coalition contains an invalid peer index")
        return self.size_values[len(members)]

    def value_of_size(self, size: int) -> float:
        if not 0 <= size <= self.n_peers:
            raise ValueError(f"coalition size {size} out of range")
        return self.size_values[size]


def sharing_game(params: CpsParams) -> CoalitionValueFn:
    """Characteristic function of the cooperative sharing game."""
    vals = [0.0] + [
        s * conjugate(params.benefit, shared_unit_cost(params, s))
        for s in range(1, params.n_peers + 1)
    ]
    return CoalitionValueFn(n_peers=params.n_peers, size_values=tuple(vals))


def shapley(params: CpsParams) -> np.ndarray:
    """Shapley value of the sharing game: the equal split of the best total.

    Symmetry forces equal coordinates and efficiency forces them to sum to
    the grand-coalition value, so each peer receives the best average
    utility of the full group. The allocation attaining it is the
    Pareto-efficient one with an equal production split.
    """
    return np.full(params.n_peers, conjugate(params.benefit, shared_unit_cost(params)))


def core_vertices(params: CpsParams) -> set[tuple[float, ...]]:
    """All vertices of the core: permutations of the marginal-product vector.

    Only for small games (``n_peers <= MAX_VERTEX_PEERS``); the vertex count
    grows factorially. For membership questions at larger sizes use
    ``is_in_core``.
    """
    n = params.n_peers
    if n > MAX_VERTEX_PEERS:
        raise ValueError(
            f"core_vertices enumerates permutations and is limited to "
            f"{MAX_VERTEX_PEERS} peers; use is_in_core for n_peers={n}"
        )
    tables = scale_tables(params, n)
    mp = tuple(tables.marginal_product[s] for s in range(1, n + 1))
    return set(itertools.permutations(mp))


def _core_rhs(params: CpsParams, size: int) -> float:
    """Largest total production a coalition of ``size`` peers may shoulder."""
    x_pe = pareto_total_production(params)
    f_at = float(params.benefit.eval(x_pe))
    headroom = f_at - params.delta * x_pe - conjugate(
        params.benefit, shared_unit_cost(params, size)
    )
    return size * headroom / (params.kappa + (params.n_peers - 1) * params.sigma - params.delta)


@dataclass(frozen=True)
class CoreMembership:
    is_member: bool
    violating_coalition: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.is_member


def is_in_core(params: CpsParams, x: Sequence[float]) -> CoreMembership:
    """Check whether a Pareto-efficient production split has the core property.

    For each coalition size the binding coalition is the one grouping the
    largest producers (the constraint bound depends only on the size), so
    ``n_peers`` checks suffice. Returns the violating coalition on failure.
    """
    prod = np.asarray(x, dtype=float)
    if prod.shape != (params.n_peers,):
        raise ValueError(f"production profile must have length {params.n_peers}")
    if np.any(prod < -1e-12):
        raise ValueError("production levels must be nonnegative")
    x_pe = pareto_total_production(params)
    if abs(float(prod.sum()) - x_pe) > 1e-6:
        raise ValueError(
            f"total production {float(prod.sum())} is not Pareto-efficient (expected {x_pe})"
        )
    order = np.argsort(-prod)
    running = 0.0
    for s in range(1, params.n_peers + 1):
        running += prod[order[s - 1]]
        bound = _core_rhs(params, s)
        if running > bound + 1e-9 * max(1.0, abs(bound)):
            return CoreMembership(False, tuple(int(i) for i in order[:s]))
    return CoreMembership(True)


def is_in_core_exhaustive(params: CpsParams, x: Sequence[float]) -> CoreMembership:
    """Membership check enumerating every coalition; oracle for small games."""
    n = params.n_peers
    if n > MAX_EXHAUSTIVE_PEERS:
        raise ValueError(f"exhaustive check limited to {MAX_EXHAUSTIVE_PEERS} peers")
    prod = np.asarray(x, dtype=float)
    if prod.shape != (n,):
        raise ValueError(f"production profile must have length {n}")
    x_pe = pareto_total_production(params)
    if abs(float(prod.sum()) - x_pe) > 1e-6:
        raise ValueError("total production is not Pareto-efficient")
    bounds = {s: _core_rhs(params, s) for s in range(1, n + 1)}
    for size in range(1, n + 1):
        for coalition in itertools.combinations(range(n), size):
            tot = float(prod[list(coalition)].sum())
            if tot > bounds[size] + 1e-9 * max(1.0, abs(bounds[size])):
                return CoreMembership(False, coalition)
    return CoreMembership(True)


def participation_bound(params: CpsParams) -> float:
    """Highest individual production compatible with voluntary participation.

    Under a Pareto-efficient allocation a peer's utility falls as its own
    production share rises; beyond this bound it would be better off alone.
    """
    if params.n_peers < 2:
        raise ValueError("participation bound is degenerate for a single peer")
    return _core_rhs(params, 1)


@dataclass(frozen=True)
class GroupSizeResult:
    """Outcome of the optimal-group-size search under mandated full sharing.

    ``ties`` lists any other sizes achieving the same maximum (the search
    assumes a unique peak and surfaces violations rather than hiding them).
    """

    n_star: int
    peak_value: float
    searched_max: int
    ties: tuple[int, ...] = ()

    @property
    def is_tie(self) -> bool:
        return bool(self.ties)


def optimal_group_size(params: CpsParams) -> GroupSizeResult:
    """Group size maximizing average utility under mandated full sharing.

    Average utility is zero for any group large enough that the effective
    production cost reaches the marginal benefit at zero, so the search is
    finite. Ties resolve to the smallest size and are reported.
    """
    n_cap = int(math.floor((params.benefit.deriv_at_zero - params.kappa) / params.sigma + 1.0))
    n_cap = max(n_cap, 1)
    values = {n: avg_utility_full_sharing(params, n) for n in range(1, n_cap + 1)}
    best = max(values.values())
    winners = [n for n, v in values.items() if abs(v - best) <= 1e-12 * max(1.0, abs(best))]
    return GroupSizeResult(
        n_star=winners[0],
        peak_value=values[winners[0]],
        searched_max=n_cap,
        ties=tuple(winners[1:]),
    )


def full_sharing_game(params: CpsParams, total_n: int) -> CoalitionValueFn:
    """Characteristic function when peers form full-sharing groups of the best size.

    A coalition splits into as many optimal-size groups as fit plus one
    residual group; its value is the sum of the members' group averages.
    """
    if total_n < 1:
        raise ValueError("total_n must be >= 1")
    n_star = optimal_group_size(params).n_star
    g_star = avg_utility_full_sharing(params, n_star)
    vals = [0.0]
    for size in range(1, total_n + 1):
        full_groups, residual = divmod(size, n_star)
        value = full_groups * n_star * g_star
        if residual:
            value += residual * avg_utility_full_sharing(params, residual)
        vals.append(value)
    return CoalitionValueFn(n_peers=total_n, size_values=tuple(vals))


@dataclass(frozen=True)
class BlockingWitness:
    """A coalition that can improve on a candidate utility profile."""

    coalition: tuple[int, ...]
    coalition_value: float
    blocked_profile: tuple[float, ...]
    blocked_sum: float


@dataclass(frozen=True)
class VfsCoreResult:
    """Core of the endogenous-group full-sharing game.

    Either the unique symmetric profile (when the population divides evenly
    into optimal-size groups) or empty together with a blocking witness
    against the natural group-formation profile.
    """

    is_empty: bool
    profile: tuple[float, ...] | None
    witness: BlockingWitness | None
    n_star: int


def vfs_core(params: CpsParams, total_n: int) -> VfsCoreResult:
    """Core of the full-sharing game among ``total_n`` peers.

    Requires the optimal group size to be smaller than the population. When
    the population is a multiple of the optimal size the core is the single
    profile giving everyone the optimal-group average; otherwise a residual
    peer can underbid a member of a full group, so the core is empty.
    """
    size_result = optimal_group_size(params)
    n_star = size_result.n_star
    if n_star >= total_n:
        raise ValueError(
            f"optimal group size {n_star} must be smaller than the population {total_n}"
        )
    g_star = size_result.peak_value
    if total_n % n_star == 0:
        return VfsCoreResult(
            is_empty=False,
            profile=(g_star,) * total_n,
            witness=None,
            n_star=n_star,
        )
    residual = total_n % n_star
    g_res = avg_utility_full_sharing(params, residual)
    # Natural profile: full groups first, residual group last.
    candidate = (g_star,) * (total_n - residual) + (g_res,) * residual
    # One residual peer joins n_star - 1 members of a full group; together
    # they can form a fresh optimal-size group worth n_star * g_star, more
    # than they currently hold because the residual average is lower.
    coalition = tuple(range(n_star - 1)) + (total_n - 1,)
    blocked_sum = (n_star - 1) * g_star + g_res
    return VfsCoreResult(
        is_empty=True,
        profile=None,
        witness=BlockingWitness(
            coalition=coalition,
            coalition_value=n_star * g_star,
            blocked_profile=candidate,
            blocked_sum=blocked_sum,
        ),
        n_star=n_star,
    )
