"""Non-cooperative incentive schemes: linear pricing, intervention, repeated play.

A linear pricing scheme pays each peer ``p`` per unit uploaded and charges
``p`` per unit downloaded; it is budget balanced by construction. At the
optimal price the self-enforcing outcome of the priced game is Pareto
efficient and every peer earns the cooperative (Shapley) payoff. The price
can be found without knowing peers' utilities by adjusting it against excess
demand, and production totals coordinate through a quantity adjustment
process. An intervention scheme achieves the same outcome without transfers
by throttling the download rate of peers whose upload/download ratio falls
below one; at equilibrium the throttle never fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .benefit import conjugate, maximizer
from .core import (
    Allocation,
    CpsParams,
    SolutionReport,
    pareto_total_production,
    solve_pareto,
    utilities,
)


class DivergenceError(RuntimeError):
    """The discretized adjustment dynamic left its admissible region."""


def optimal_price(params: CpsParams) -> float:
    """Per-unit transfer price that makes the efficient outcome self-enforcing.

    Equates the effective marginal cost of downloading (price plus download
    cost) with the effective marginal cost of producing and uploading, so
    peers are indifferent between sourcing content either way. The identity
    ``optimal_price + delta == shared_unit_cost`` holds.
    """
    n = params.n_peers
    return (params.kappa + (n - 1) * params.sigma - params.delta) / n


@dataclass(frozen=True)
class LinearPrice:
    """Uniform per-unit transfer payment: a peer receives ``p * (uploads - downloads)``."""

    p: float

    def __post_init__(self) -> None:
        if self.p <= 0:
            raise ValueError("price must be positive")

    def payments(self, z: np.ndarray) -> np.ndarray:
        """Per-peer payment vector for a transfer matrix; sums to zero."""
        z = np.asarray(z, dtype=float)
        return self.p * (z.sum(axis=0) - z.sum(axis=1))


@dataclass(frozen=True)
class InterventionFn:
    """Download-cost surcharge driven by a peer's upload/download ratio.

    ``level(r) = p_star * max(1 - r, 0)``: peers who upload at least as much
    as they download are untouched; pure free riders pay the full surcharge.
    """

    p_star: float

    def __post_init__(self) -> None:
        if self.p_star <= 0:
            raise ValueError("p_star must be positive")

    @staticmethod
    def rating(upload: float, download: float) -> float:
        """Upload/download ratio; no downloads means nothing to throttle."""
        if download <= 0:
            return math.inf
        return upload / download

    def level(self, rating: float) -> float:
        if rating < 0:
            raise ValueError("rating must be nonnegative")
        return self.p_star * max(1.0 - rating, 0.0)


def optimal_intervention(params: CpsParams) -> InterventionFn:
    return InterventionFn(p_star=optimal_price(params))


def _clamped_maximizer(params: CpsParams, alpha: float) -> float:
    """Optimal acquisition volume at unit cost ``alpha``; infinite when free.

    A nonpositive effective cost makes the acquisition problem unbounded, in
    which case ``inf`` is returned for the callers that can represent it.
    """
    if alpha <= 0:
        return math.inf
    return maximizer(params.benefit, alpha)


def priced_best_response(
    params: CpsParams, prices: Sequence[float], peer: int
) -> tuple[float, float]:
    """Optimal production and download volumes of one peer facing per-peer prices.

    Under the price vector each peer solves a one-dimensional acquisition
    problem: below the market-clearing price total it only downloads, above
    it only produces, and exactly at it any split of the optimal total is
    optimal (the symmetric split is returned).
    """
    p = np.asarray(prices, dtype=float)
    if p.shape != (params.n_peers,):
        raise ValueError(f"prices must have length {params.n_peers}")
    if np.any(p < 0):
        raise ValueError("prices must be nonnegative")
    if not 0 <= peer < params.n_peers:
        raise ValueError(f"peer index {peer} out of range")
    n = params.n_peers
    threshold = params.kappa + (n - 1) * params.sigma - params.delta
    price_sum = float(p.sum())
    download_cost = float(p[peer]) + params.delta
    production_cost = params.kappa + (n - 1) * params.sigma - (price_sum - float(p[peer]))
    if abs(price_sum - threshold) <= 1e-10:
        total = _clamped_maximizer(params, download_cost)
        return total / n, (n - 1) * total / n
    if price_sum < threshold:
        return 0.0, _clamped_maximizer(params, download_cost)
    if production_cost <= 0:
        raise ValueError(
            "effective production cost is nonpositive; the acquisition problem is unbounded"
        )
    return _clamped_maximizer(params, production_cost), 0.0


def demand_at(params: CpsParams, p: float) -> float:
    """Total download volume demanded at a uniform price ``p``."""
    p_star = optimal_price(params)
    n = params.n_peers
    if _at_pstar(p, p_star):
        return (n - 1) * pareto_total_production(params)
    if p < p_star:
        return n * _clamped_maximizer(params, p + params.delta)
    return 0.0


def supply_at(params: CpsParams, p: float) -> float:
    """Total upload volume offered at a uniform price ``p``.

    Each produced unit can be uploaded to the other ``n - 1`` peers, so
    supply is ``n - 1`` times total production. Beyond the price at which
    the effective production cost turns nonpositive, supply is unbounded.
    """
    p_star = optimal_price(params)
    n = params.n_peers
    if _at_pstar(p, p_star):
        return (n - 1) * pareto_total_production(params)
    if p < p_star:
        return 0.0
    alpha = params.kappa - (n - 1) * (p - params.sigma)
    return n * (n - 1) * _clamped_maximizer(params, alpha)


def excess_demand(params: CpsParams, p: float) -> float:
    """Demand minus supply; positive below the optimal price, negative above."""
    return demand_at(params, p) - supply_at(params, p)


def _at_pstar(p: float, p_star: float) -> bool:
    return abs(p - p_star) <= 1e-12 * max(1.0, p_star)


@dataclass(frozen=True, eq=False)
class MarketCurves:
    """Demand, supply, and excess demand evaluated on a price grid."""

    prices: np.ndarray
    demand: np.ndarray
    supply: np.ndarray
    excess: np.ndarray
    p_star: float


def market_curves(params: CpsParams, price_grid: Sequence[float]) -> MarketCurves:
    """Evaluate the piecewise demand/supply schedules on a grid of prices."""
    prices = np.asarray(price_grid, dtype=float)
    if prices.ndim != 1 or prices.size == 0:
        raise ValueError("price_grid must be a nonempty 1-D sequence")
    if np.any(prices <= 0):
        raise ValueError("prices must be positive")
    d = np.array([demand_at(params, float(p)) for p in prices])
    s = np.array([supply_at(params, float(p)) for p in prices])
    return MarketCurves(
        prices=prices, demand=d, supply=s, excess=d - s, p_star=optimal_price(params)
    )


@dataclass(frozen=True, eq=False)
class PriceAdjustmentResult:
    """Trajectory of the excess-demand price dynamic."""

    prices: np.ndarray
    converged: bool
    iterations: int
    p_star: float


# Per-iteration price moves are capped at this fraction of the current price
# so the discretized dynamic survives the unbounded-supply price region.
_MAX_RELATIVE_MOVE = 0.1


def run_price_adjustment(
    params: CpsParams,
    p0: float,
    eta: float = 1.0,
    step: float | None = None,
    max_iters: int = 100_000,
    tol: float = 1e-6,
) -> PriceAdjustmentResult:
    """Drive the announced price toward the optimal one via excess demand.

    Integrates ``dp/dt = eta * excess_demand(p)`` with an explicit Euler
    scheme. Excess demand is discontinuous at the optimal price, so a fixed
    step orbits it instead of landing; the step is therefore halved whenever
    excess demand changes sign, and single moves are capped at a fraction of
    the current price (which also tames the unbounded-supply region). The
    default step scales so that near-equilibrium moves start around 1% of
    the optimal price.
    """
    if p0 <= 0:
        raise ValueError("p0 must be positive")
    if eta <= 0:
        raise ValueError("eta must be positive")
    p_star = optimal_price(params)
    if step is None:
        n = params.n_peers
        ed_scale = n * max(1, n - 1) * max(pareto_total_production(params), 1e-12)
        step = 0.01 * p_star / (eta * ed_scale)
    elif step <= 0:
        raise ValueError("step must be positive")
    ceiling = 10.0 * params.benefit.deriv_at_zero
    p = float(p0)
    if p > ceiling:
        raise DivergenceError(f"initial price {p} exceeds the divergence ceiling {ceiling}")
    trajectory = [p]
    h = float(step)
    last_sign = 0
    converged = abs(p - p_star) < tol
    iterations = 0
    while not converged and iterations < max_iters:
        ed = excess_demand(params, p)
        if ed == 0:
            break  # at rest away from the optimum (possible when nobody trades)
        sign = 1 if ed > 0 else -1
        if last_sign and sign != last_sign:
            h *= 0.5
        last_sign = sign
        move = h * eta * ed
        cap = _MAX_RELATIVE_MOVE * p
        move = min(max(move, -cap), cap)  # finite even when ed is -inf
        p += move
        iterations += 1
        trajectory.append(p)
        if p <= 0 or p > ceiling:
            raise DivergenceError(f"price diverged to {p} after {iterations} iterations")
        converged = abs(p - p_star) < tol
    return PriceAdjustmentResult(
        prices=np.asarray(trajectory),
        converged=converged,
        iterations=iterations,
        p_star=p_star,
    )


@dataclass(frozen=True, eq=False)
class QuantityAdjustmentResult:
    """Trajectory of the production/download coordination dynamic."""

    x_path: np.ndarray
    d_path: np.ndarray
    converged: bool
    iterations: int
    target_total: float


def run_quantity_adjustment(
    params: CpsParams,
    x0: Sequence[float],
    eta: Sequence[float] | float = 1.0,
    step: float | None = None,
    max_iters: int = 100_000,
    tol: float = 1e-6,
) -> QuantityAdjustmentResult:
    """Coordinate individual production levels onto the efficient total.

    Peers start at privately optimal volumes (production plus download equal
    to the efficient total) and shift production toward unmet demand:
    ``dx_i/dt = eta_i * (d_i - sum_{j != i} x_j)``. Production stops
    adjusting downward at zero. The sum ``x_i + d_i`` is invariant along the
    trajectory, so convergence of total production finishes the job.
    """
    n = params.n_peers
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError(f"x0 must have length {n}")
    if np.any(x < 0):
        raise ValueError("production levels must be nonnegative")
    target = pareto_total_production(params)
    d = target - x
    if np.any(d < -1e-9):
        raise ValueError(
            "initial volumes are not privately optimal: need x0[i] + d0[i] equal to "
            f"the efficient total {target} with nonnegative downloads"
        )
    d = np.maximum(d, 0.0)
    etas = np.broadcast_to(np.asarray(eta, dtype=float), (n,)).copy()
    if np.any(etas <= 0):
        raise ValueError("eta must be positive")
    if step is None:
        step = 0.5 / float(etas.sum())
    elif step <= 0:
        raise ValueError("step must be positive")
    xs = [x.copy()]
    ds = [d.copy()]
    iterations = 0
    converged = abs(float(x.sum()) - target) < tol
    while not converged and iterations < max_iters:
        total = float(x.sum())
        drift = etas * (d - (total - x))  # d_i - sum_{j != i} x_j
        x = np.maximum(x + step * drift, 0.0)
        d = target - x
        iterations += 1
        xs.append(x.copy())
        ds.append(d.copy())
        converged = abs(float(x.sum()) - target) < tol
    return QuantityAdjustmentResult(
        x_path=np.asarray(xs),
        d_path=np.asarray(ds),
        converged=converged,
        iterations=iterations,
        target_total=target,
    )


def misreport_payoff(params: CpsParams, stalled_price: float, side: str) -> float:
    """Payoff of a peer that stalls the price adjustment away from the optimum.

    ``side='low'``: the peer reports itself as the sole producer so the
    dynamic stops at a price below the optimum; it then bears the inflated
    production-and-upload cost. ``side='high'`` (only possible with two
    peers): the peer reports pure demand so the dynamic stops above the
    optimum; it then pays the inflated download price. Both payoffs fall
    short of the truthful equilibrium payoff.
    """
    p_star = optimal_price(params)
    n = params.n_peers
    if side == "low":
        if not 0 < stalled_price < p_star:
            raise ValueError("side='low' requires 0 < stalled_price < optimal price")
        volume = _clamped_maximizer(params, stalled_price + params.delta)
        unit_cost = params.kappa - (n - 1) * (stalled_price - params.sigma)
        return float(params.benefit.eval(volume)) - unit_cost * volume
    if side == "high":
        if n > 2:
            raise ValueError(
                "a single peer cannot stall the price above the optimum with more than "
                "two peers: it cannot absorb the other peers' supply alone"
            )
        if stalled_price <= p_star:
            raise ValueError("side='high' requires stalled_price > optimal price")
        alpha = params.kappa - (n - 1) * (stalled_price - params.sigma)
        if alpha <= 0:
            raise ValueError("stalled price too high: reported supply would be unbounded")
        volume = maximizer(params.benefit, alpha)
        return float(params.benefit.eval(volume)) - (stalled_price + params.delta) * volume
    raise ValueError("side must be 'low' or 'high'")


@dataclass(frozen=True, eq=False)
class InterventionOutcome:
    """Equilibrium report of the intervention scheme with ratings and levels."""

    report: SolutionReport
    ratings: np.ndarray
    levels: np.ndarray
    scheme: InterventionFn


def intervention_outcome(params: CpsParams) -> InterventionOutcome:
    """Self-enforcing outcome under the optimal intervention scheme.

    Uploading less than one downloads triggers a download-cost surcharge, so
    peers split the efficient total production equally; everyone's ratio is
    one and the surcharge stays at zero, a pure threat.
    """
    if params.n_peers < 2:
        raise ValueError("intervention requires at least two peers")
    scheme = optimal_intervention(params)
    report = solve_pareto(params, None)
    d = report.allocation.downloads()
    u = report.allocation.uploads()
    ratings = np.array([scheme.rating(float(ui), float(di)) for ui, di in zip(u, d)])
    levels = np.array([scheme.level(float(r)) for r in ratings])
    return InterventionOutcome(report=report, ratings=ratings, levels=levels, scheme=scheme)


def check_participation_efficient(params: CpsParams, alloc: Allocation) -> bool:
    """True when an allocation is efficient and beats autarky for every peer.

    This is exactly the condition under which repeated play sustains the
    allocation: the threat of permanent reversion to autarkic play deters
    any deviation, because deviations are publicly visible in the shared
    amounts and no peer prefers autarky to its allocated payoff.
    """
    alloc.validate()
    if alloc.n_peers != params.n_peers:
        raise ValueError("allocation size does not match n_peers")
    target = pareto_total_production(params)
    structure_tol = 1e-6
    if abs(float(alloc.x.sum()) - target) > structure_tol:
        return False
    if np.any(np.abs(alloc.y - alloc.x) > structure_tol):
        return False
    expected = np.tile(alloc.x, (params.n_peers, 1))
    np.fill_diagonal(expected, 0.0)
    if np.any(np.abs(alloc.z - expected) > structure_tol):
        return False
    autarky = conjugate(params.benefit, params.kappa)
    return bool(np.all(utilities(params, alloc) >= autarky - 1e-9))
