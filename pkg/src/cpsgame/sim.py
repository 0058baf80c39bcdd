"""Round-based play of the three-stage game with strategic peers.

The engine replays the produce/share/download stages under a pluggable
scheme (none, linear pricing, intervention) and exists to verify the
analytic predictions numerically: the no-scheme outcome is a fixed point of
best-response dynamics, the pricing and intervention outcomes are reached
and held, and a grim-trigger profile erases one-shot deviation gains under
the long-run average criterion.

Information flow mirrors the game: production is private, the sharing
profile becomes public at the end of stage two, and downloads are served up
to each peer's shared amount. Strategies only ever see their own actions
and payoffs plus the public sharing profiles.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .benefit import maximizer
from .core import (
    Allocation,
    CpsParams,
    autarky_production,
    pareto_total_production,
    utilities,
)
from .incentives import (
    InterventionFn,
    check_participation_efficient,
    optimal_intervention,
    optimal_price,
)

FEAS_ATOL = 1e-9


class StrategyError(ValueError):
    """A strategy emitted an infeasible action; identifies peer and stage."""


def _eval_benefit(benefit, arr):
    """Evaluate a benefit function on an array, falling back to a scalar loop."""
    try:
        return np.asarray(benefit.eval(arr), dtype=float)
    except TypeError:
        flat = np.asarray(arr, dtype=float).ravel()
        out = np.array([float(benefit.eval(float(v))) for v in flat])
        return out.reshape(np.shape(arr))


# ---------------------------------------------------------------------------
# Schemes


class Scheme(ABC):
    """Payoff adjustment applied on top of the raw game utilities."""

    name: str = "none"

    @abstractmethod
    def transfer_from_volumes(self, params: CpsParams, upload, download):
        """Payoff adjustment given upload/download volumes (vectorizable)."""

    @abstractmethod
    def download_cost(self, params: CpsParams) -> tuple[float, float]:
        """(base, overdraft): marginal download cost, plus the extra marginal
        cost of downloading beyond one's expected upload volume."""

    def transfers(self, params: CpsParams, alloc: Allocation) -> np.ndarray:
        return np.asarray(
            self.transfer_from_volumes(params, alloc.uploads(), alloc.downloads()),
            dtype=float,
        )

    def intervention_levels(self, params: CpsParams, alloc: Allocation) -> np.ndarray:
        return np.zeros(params.n_peers)


class NoScheme(Scheme):
    name = "none"

    def transfer_from_volumes(self, params, upload, download):
        return np.zeros_like(np.asarray(download, dtype=float))

    def download_cost(self, params):
        return params.delta, 0.0


class LinearPricingScheme(Scheme):
    name = "pricing"

    def __init__(self, price: float):
        if price <= 0:
            raise ValueError("price must be positive")
        self.price = price

    def transfer_from_volumes(self, params, upload, download):
        return self.price * (np.asarray(upload, float) - np.asarray(download, float))

    def download_cost(self, params):
        return self.price + params.delta, 0.0


class InterventionScheme(Scheme):
    name = "intervention"

    def __init__(self, fn: InterventionFn):
        self.fn = fn

    def transfer_from_volumes(self, params, upload, download):
        # level(rating) * download == p_star * (download - upload)^+
        over = np.asarray(download, float) - np.asarray(upload, float)
        return -self.fn.p_star * np.maximum(over, 0.0)

    def download_cost(self, params):
        return params.delta, self.fn.p_star

    def intervention_levels(self, params, alloc):
        d = alloc.downloads()
        u = alloc.uploads()
        return np.array(
            [self.fn.level(self.fn.rating(float(ui), float(di))) for ui, di in zip(u, d)]
        )


def make_scheme(name: str, params: CpsParams) -> Scheme:
    if name == "none":
        return NoScheme()
    if name == "pricing":
        return LinearPricingScheme(optimal_price(params))
    if name == "intervention":
        return InterventionScheme(optimal_intervention(params))
    raise ValueError(f"unknown scheme {name!r}")


# ---------------------------------------------------------------------------
# Stage-three download rule


def optimal_download_volume(params: CpsParams, scheme: Scheme, x, avail, expected_upload=0.0):
    """Download volume maximizing a peer's payoff given its production and
    the available shared content.

    Under an intervention scheme, downloading beyond the expected upload
    volume pays the surcharge, so the objective is piecewise concave with a
    kink at the expected upload; both segment optima are evaluated. Accepts
    scalars or broadcastable arrays.
    """
    base, overdraft = scheme.download_cost(params)
    x = np.asarray(x, dtype=float)
    avail = np.asarray(avail, dtype=float)
    sat_base = maximizer(params.benefit, base)
    cheap_opt = np.maximum(sat_base - x, 0.0)
    if overdraft <= 0:
        return np.minimum(avail, cheap_opt)
    ue = np.asarray(expected_upload, dtype=float)
    cap_cheap = np.minimum(np.maximum(ue, 0.0), avail)
    cand_a = np.minimum(cheap_opt, cap_cheap)
    sat_full = maximizer(params.benefit, base + overdraft)
    cand_b = np.clip(np.maximum(sat_full - x, 0.0), cap_cheap, avail)

    def phi(d):
        return (
            _eval_benefit(params.benefit, x + d)
            - base * d
            - overdraft * np.maximum(d - ue, 0.0)
        )

    return np.where(phi(cand_b) > phi(cand_a) + 1e-15, cand_b, cand_a)


def proportional_download_row(d_total: float, y_profile: np.ndarray, peer: int) -> np.ndarray:
    """Spread a download volume across the other peers' shares proportionally."""
    y = np.asarray(y_profile, dtype=float)
    row = np.zeros_like(y)
    avail = float(y.sum() - y[peer])
    if avail > 0 and d_total > 0:
        row = (d_total / avail) * y
        row[peer] = 0.0
    return row


# ---------------------------------------------------------------------------
# Histories (per-peer observable views) and strategies


@dataclass(frozen=True, eq=False)
class PeerRound:
    """What one peer observed in one round: the public sharing profile plus
    its own actions, payoff, and scheme events."""

    y_profile: np.ndarray
    own_production: float
    own_downloads: np.ndarray
    own_upload: float
    payoff: float
    transfer: float
    intervention_level: float
    punished: bool


@dataclass(eq=False)
class PeerHistory:
    peer: int
    rounds: list = field(default_factory=list)


class PeerStrategy(ABC):
    """A complete contingent plan over the three stages."""

    @abstractmethod
    def produce(self, history: PeerHistory) -> float: ...

    @abstractmethod
    def share(self, history: PeerHistory, x_i: float) -> float: ...

    @abstractmethod
    def download(self, history: PeerHistory, x_i: float, y_profile: np.ndarray) -> np.ndarray: ...


class FixedActionStrategy(PeerStrategy):
    """Constant production and sharing with the rational download rule."""

    def __init__(self, params: CpsParams, scheme: Scheme, production: float, sharing: float):
        if production < 0 or sharing < 0:
            raise ValueError("actions must be nonnegative")
        self.params = params
        self.scheme = scheme
        self.production = float(production)
        self.sharing = float(sharing)

    def produce(self, history):
        return self.production

    def share(self, history, x_i):
        return min(self.sharing, x_i)

    def download(self, history, x_i, y_profile):
        i = history.peer
        avail = float(y_profile.sum() - y_profile[i])
        expected_upload = history.rounds[-1].own_upload if history.rounds else 0.0
        d = float(optimal_download_volume(self.params, self.scheme, x_i, avail, expected_upload))
        return proportional_download_row(d, y_profile, i)


class GrimTriggerStrategy(PeerStrategy):
    """Cooperate on a target allocation; revert to autarkic play forever after
    any public deviation of the sharing profile.

    An optional scripted deviation (round index plus action pair) turns the
    holder into the deviant peer for punishment experiments.
    """

    def __init__(
        self,
        params: CpsParams,
        scheme: Scheme,
        cooperate_production: float,
        target_y: np.ndarray,
        deviation_round: int | None = None,
        deviation_action: tuple[float, float] | None = None,
    ):
        self.params = params
        self.scheme = scheme
        self.cooperate_production = float(cooperate_production)
        self.target_y = np.asarray(target_y, dtype=float)
        self.deviation_round = deviation_round
        self.deviation_action = deviation_action
        self._autarky = autarky_production(params)
        self._punished = False

    def _refresh(self, history: PeerHistory) -> None:
        # Grim trigger is monotone: only the newest round can flip the state.
        if not self._punished and history.rounds:
            last = history.rounds[-1]
            if np.any(np.abs(last.y_profile - self.target_y) > FEAS_ATOL):
                self._punished = True

    def _deviating(self, history: PeerHistory) -> bool:
        return (
            self.deviation_round is not None
            and len(history.rounds) == self.deviation_round
        )

    def produce(self, history):
        self._refresh(history)
        if self._punished:
            return self._autarky
        if self._deviating(history):
            return self.deviation_action[0]
        return self.cooperate_production

    def share(self, history, x_i):
        if self._punished:
            return 0.0
        if self._deviating(history):
            return min(self.deviation_action[1], x_i)
        return x_i

    def download(self, history, x_i, y_profile):
        i = history.peer
        avail = float(y_profile.sum() - y_profile[i])
        expected_upload = history.rounds[-1].own_upload if history.rounds else 0.0
        d = float(optimal_download_volume(self.params, self.scheme, x_i, avail, expected_upload))
        return proportional_download_row(d, y_profile, i)


# ---------------------------------------------------------------------------
# Engine


@dataclass(frozen=True, eq=False)
class RoundRecord:
    """Full record of one played round (engine view, not peer-visible)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    base_utilities: np.ndarray
    transfers: np.ndarray
    intervention_levels: np.ndarray
    payoffs: np.ndarray
    punished: bool = False

    def transfer_volume(self) -> float:
        return float(self.z.sum())


def play_round(
    params: CpsParams,
    strategies: Sequence[PeerStrategy],
    scheme: Scheme,
    histories: Sequence[PeerHistory],
    punished: bool = False,
) -> RoundRecord:
    """Execute the three stages once and settle payoffs under the scheme.

    Stage order matters: production is chosen privately, the sharing profile
    is then published, and downloads react to it. Infeasible strategy output
    aborts the round naming the offending peer and stage.
    """
    n = params.n_peers
    if len(strategies) != n or len(histories) != n:
        raise ValueError("need one strategy and one history per peer")
    x = np.zeros(n)
    for i in range(n):
        xi = float(strategies[i].produce(histories[i]))
        if not np.isfinite(xi) or xi < 0:
            raise StrategyError(f"peer {i}, stage one: production {xi} is infeasible")
        x[i] = xi
    y = np.zeros(n)
    for i in range(n):
        yi = float(strategies[i].share(histories[i], x[i]))
        if not np.isfinite(yi) or yi < -FEAS_ATOL or yi > x[i] + FEAS_ATOL:
            raise StrategyError(
                f"peer {i}, stage two: sharing {yi} outside [0, {x[i]}]"
            )
        y[i] = min(max(yi, 0.0), x[i])
    z = np.zeros((n, n))
    for i in range(n):
        row = np.asarray(strategies[i].download(histories[i], x[i], y.copy()), dtype=float)
        if row.shape != (n,):
            raise StrategyError(f"peer {i}, stage three: download row has shape {row.shape}")
        if not np.all(np.isfinite(row)) or np.any(row < -FEAS_ATOL):
            raise StrategyError(f"peer {i}, stage three: negative or non-finite downloads")
        if abs(row[i]) > FEAS_ATOL:
            raise StrategyError(f"peer {i}, stage three: requested download from itself")
        others = np.arange(n) != i
        violated = np.where(others & (row > y + FEAS_ATOL))[0]
        if violated.size:
            j = int(violated[0])
            raise StrategyError(
                f"peer {i}, stage three: download {row[j]} exceeds peer {j}'s shared amount {y[j]}"
            )
        row = np.minimum(np.maximum(row, 0.0), np.where(np.arange(n) == i, 0.0, y))
        z[i] = row
    alloc = Allocation(x, y, z)
    base = utilities(params, alloc)
    transfers = scheme.transfers(params, alloc)
    levels = scheme.intervention_levels(params, alloc)
    return RoundRecord(
        x=x,
        y=y,
        z=z,
        base_utilities=base,
        transfers=transfers,
        intervention_levels=levels,
        payoffs=base + transfers,
        punished=punished,
    )


def append_round(histories: Sequence[PeerHistory], record: RoundRecord) -> None:
    """Distribute a played round into the per-peer observable histories."""
    for i, h in enumerate(histories):
        h.rounds.append(
            PeerRound(
                y_profile=record.y.copy(),
                own_production=float(record.x[i]),
                own_downloads=record.z[i].copy(),
                own_upload=float(record.z[:, i].sum()),
                payoff=float(record.payoffs[i]),
                transfer=float(record.transfers[i]),
                intervention_level=float(record.intervention_levels[i]),
                punished=record.punished,
            )
        )


@dataclass(eq=False)
class RunStats:
    """Per-round payoff streams and aggregates of a multi-round run."""

    payoffs: np.ndarray  # [rounds, n_peers]
    transfer_volumes: np.ndarray  # [rounds]
    converged: bool | None
    final_record: RoundRecord
    deviation_detected_round: int | None = None  # 0-based round of first public deviation

    def running_means(self) -> np.ndarray:
        """Cumulative per-peer average payoff after each round."""
        t = np.arange(1, self.payoffs.shape[0] + 1, dtype=float)
        return np.cumsum(self.payoffs, axis=0) / t[:, None]


# ---------------------------------------------------------------------------
# Best-response dynamics


def _grid_best_response(
    params: CpsParams,
    scheme: Scheme,
    last: RoundRecord,
    peer: int,
    n_grid: int,
    grid_hi: float,
) -> tuple[float, float]:
    """Best constant (production, sharing) pair for one peer against the last
    observed play, by grid search with rational downloads.

    The other peers' productions and sharing levels are held at the last
    round; their stage-three rules still react to the candidate sharing
    level, which is what makes offering content valuable under pricing and
    intervention.
    """
    n = params.n_peers
    xs = np.linspace(0.0, grid_hi, n_grid)
    ys = np.linspace(0.0, grid_hi, n_grid)
    others = [j for j in range(n) if j != peer]
    uploads_last = last.z.sum(axis=0)
    rest_total = float(last.y[others].sum())

    # Upload pulled from the candidate share by the other peers' download rules.
    u_peer = np.zeros_like(ys)
    for j in others:
        avail_j = (rest_total - float(last.y[j])) + ys
        d_j = optimal_download_volume(
            params, scheme, float(last.x[j]), avail_j, float(uploads_last[j])
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(avail_j > 0, ys / avail_j, 0.0)
        u_peer += d_j * frac

    avail_peer = rest_total
    d_own = optimal_download_volume(params, scheme, xs[:, None], avail_peer, u_peer[None, :])
    cons = xs[:, None] + d_own
    payoff = (
        _eval_benefit(params.benefit, cons)
        - params.kappa * xs[:, None]
        - params.delta * d_own
        - params.sigma * u_peer[None, :]
        + scheme.transfer_from_volumes(params, u_peer[None, :], d_own)
    )
    payoff = np.where(xs[:, None] >= ys[None, :], payoff, -np.inf)
    ix, iy = np.unravel_index(int(np.argmax(payoff)), payoff.shape)
    return float(xs[ix]), float(ys[iy])


def best_response_dynamics(
    params: CpsParams,
    scheme: Scheme,
    init_strategies: Sequence[PeerStrategy] | None = None,
    rounds: int = 60,
    seed: int = 0,
    n_grid: int = 200,
    grid_hi: float | None = None,
    tol: float | None = None,
) -> RunStats:
    """Let randomly chosen peers adopt grid best responses round by round.

    Reports whether the final round's play matches the scheme's predicted
    outcome: autarkic no-sharing play without a scheme, the efficient total
    production under the optimal price, and the symmetric efficient split
    under optimal intervention. Non-convergence is reported, not raised.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    n = params.n_peers
    if grid_hi is None:
        grid_hi = 2.0 * maximizer(params.benefit, params.delta)
    x_pe = pareto_total_production(params)
    if tol is None:
        tol = 0.01 * x_pe
    if init_strategies is None:
        # Full-sharing autarky: a neutral start that lets every scheme show
        # its pull (sharing collapses without one, demand appears with one).
        x0 = autarky_production(params)
        strategies = [FixedActionStrategy(params, scheme, x0, x0) for _ in range(n)]
    else:
        if len(init_strategies) != n:
            raise ValueError("need one initial strategy per peer")
        strategies = list(init_strategies)
    histories = [PeerHistory(i) for i in range(n)]
    rng = np.random.default_rng(seed)
    records = []
    rec = play_round(params, strategies, scheme, histories)
    append_round(histories, rec)
    records.append(rec)
    for _ in range(rounds - 1):
        peer = int(rng.integers(n))
        x_star, y_star = _grid_best_response(params, scheme, records[-1], peer, n_grid, grid_hi)
        strategies[peer] = FixedActionStrategy(params, scheme, x_star, y_star)
        rec = play_round(params, strategies, scheme, histories)
        append_round(histories, rec)
        records.append(rec)
    final = records[-1]
    if scheme.name == "none":
        x_aut = autarky_production(params)
        converged = bool(
            np.max(np.abs(final.x - x_aut)) <= tol and float(final.y.sum()) <= tol
        )
    elif scheme.name == "pricing":
        converged = bool(abs(float(final.x.sum()) - x_pe) <= tol)
    elif scheme.name == "intervention":
        converged = bool(np.max(np.abs(final.x - x_pe / n)) <= tol)
    else:
        converged = None
    return RunStats(
        payoffs=np.array([r.payoffs for r in records]),
        transfer_volumes=np.array([r.transfer_volume() for r in records]),
        converged=converged,
        final_record=final,
    )


# ---------------------------------------------------------------------------
# Repeated play with grim trigger


def grim_trigger_run(
    params: CpsParams,
    target: Allocation,
    deviant: int | None = None,
    deviation_round: int = 10,
    rounds: int = 10_000,
    scheme: Scheme | None = None,
    n_grid: int = 200,
    grid_hi: float | None = None,
) -> RunStats:
    """Repeat the game under grim-trigger strategies around a target allocation.

    All peers replay the target and revert to autarkic play forever once the
    public sharing profile deviates from it. If ``deviant`` is set, that peer
    plays its one-shot best deviation (found by grid search against the
    cooperative play) in round ``deviation_round`` (1-based). The target must
    be efficient and individually rational, which is exactly when the
    punishment threat makes cooperation self-enforcing.
    """
    scheme = scheme if scheme is not None else NoScheme()
    if not check_participation_efficient(params, target):
        raise ValueError("target allocation is not participation-efficient")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    n = params.n_peers
    if grid_hi is None:
        grid_hi = 2.0 * maximizer(params.benefit, params.delta)

    def cooperative_strategy(i: int) -> GrimTriggerStrategy:
        return GrimTriggerStrategy(params, scheme, float(target.x[i]), target.y)

    strategies: list[PeerStrategy] = [cooperative_strategy(i) for i in range(n)]
    if deviant is not None:
        if not 0 <= deviant < n:
            raise ValueError(f"deviant index {deviant} out of range")
        if not 1 <= deviation_round <= rounds:
            raise ValueError("deviation_round must fall within the horizon")
        # One cooperative dry run gives the state the deviant best-responds to.
        probe_histories = [PeerHistory(i) for i in range(n)]
        probe = play_round(
            params, [cooperative_strategy(i) for i in range(n)], scheme, probe_histories
        )
        action = _grid_best_response(params, scheme, probe, deviant, n_grid, grid_hi)
        strategies[deviant] = GrimTriggerStrategy(
            params,
            scheme,
            float(target.x[deviant]),
            target.y,
            deviation_round=deviation_round - 1,
            deviation_action=action,
        )
    histories = [PeerHistory(i) for i in range(n)]
    records = []
    first_deviation: int | None = None
    for r in range(rounds):
        active_punishment = first_deviation is not None and r > first_deviation
        rec = play_round(params, strategies, scheme, histories, punished=active_punishment)
        append_round(histories, rec)
        records.append(rec)
        if first_deviation is None and np.any(np.abs(rec.y - target.y) > FEAS_ATOL):
            first_deviation = r
    return RunStats(
        payoffs=np.array([r.payoffs for r in records]),
        transfer_volumes=np.array([r.transfer_volume() for r in records]),
        converged=None,
        final_record=records[-1],
        deviation_detected_round=first_deviation,
    )
