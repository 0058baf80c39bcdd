"""Experiment runner: parameter sweeps, reports, and figure rendering.

The ``sweep`` subcommand evaluates every solution concept over a range of
group sizes and writes six CSV data series (average individual utility,
total utility, marginal product, inefficiency ratios, transfer volumes, and
optimal prices) plus rendered PNG panels. The report subcommands execute a
single library operation and print a human-readable summary followed by
machine-readable ``key=value`` lines.

Exit codes: 0 success, 1 precondition/usage failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import figures
from .benefit import (
    BenefitSpec,
    DistinctFilesParams,
    conjugate,
    distinct_files_benefit,
    log_benefit,
)
from .coalitional import (
    avg_utility_full_sharing,
    core_vertices,
    optimal_group_size,
    scale_tables,
    shapley,
    vfs_core,
)
from .core import (
    CpsParams,
    full_sharing_total_production,
    inefficiency,
    pareto_total_production,
    shared_unit_cost,
    solve_full_sharing,
    solve_noncooperative,
    solve_pareto,
)
from .incentives import (
    intervention_outcome,
    optimal_price,
    run_price_adjustment,
    run_quantity_adjustment,
)
from .sim import grim_trigger_run

EXIT_OK = 0
EXIT_PRECONDITION = 1
EXIT_IO = 2

ALL_SCHEMES = ("none", "pricing", "intervention", "repeated", "full_sharing", "cooperative")

REPORT_SUBCOMMANDS = (
    "solve",
    "core",
    "shapley",
    "price-dynamics",
    "quantity-dynamics",
    "intervention",
    "repeated",
    "group-size",
)

PANEL_SPECS = {
    "individual_utility": "average individual utility",
    "total_utility": "total utility",
    "marginal_product": "marginal product vs average utility",
    "inefficiency": "inefficiency ratios",
    "transfer_volume": "network transfer volume",
    "optimal_price": "optimal linear price",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Benefit selection, cost parameters, sweep range, and run settings."""

    benefit_kind: str = "log"
    per_file_benefit: float = 2.0
    total_files: int = 100
    kappa: float = 0.3
    delta: float = 0.0025
    sigma: float = 0.01
    n_min: int = 1
    n_max: int = 100
    schemes: tuple[str, ...] = ALL_SCHEMES
    out_dir: str = "results"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.benefit_kind not in ("log", "distinct_files"):
            raise ValueError(f"unknown benefit kind {self.benefit_kind!r}")
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("need 1 <= n_min <= n_max")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if not self.schemes:
            raise ValueError("schemes must be nonempty")

    def benefit(self) -> BenefitSpec:
        if self.benefit_kind == "log":
            return log_benefit()
        return distinct_files_benefit(
            DistinctFilesParams(self.per_file_benefit, self.total_files)
        )

    def params(self, n: int) -> CpsParams:
        return CpsParams(
            n_peers=n,
            benefit=self.benefit(),
            kappa=self.kappa,
            delta=self.delta,
            sigma=self.sigma,
        )


_CONFIG_SCHEMA = {
    "benefit": {"kind", "per_file_benefit", "total_files"},
    "costs": {"kappa", "delta", "sigma"},
    "sweep": {"n_min", "n_max", "schemes"},
    "run": {"out", "seed"},
}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a flat key=value config file with bracketed section headers."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise OSError(f"cannot read config file {path}")
    kwargs: dict = {}
    for section in parser.sections():
        if section not in _CONFIG_SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _CONFIG_SCHEMA[section]:
                raise ValueError(f"unknown config key {key!r} in section [{section}]")
    if parser.has_section("benefit"):
        sec = parser["benefit"]
        if "kind" in sec:
            kwargs["benefit_kind"] = sec.get("kind")
        if "per_file_benefit" in sec:
            kwargs["per_file_benefit"] = sec.getfloat("per_file_benefit")
        if "total_files" in sec:
            kwargs["total_files"] = sec.getint("total_files")
    if parser.has_section("costs"):
        sec = parser["costs"]
        for key in ("kappa", "delta", "sigma"):
            if key in sec:
                kwargs[key] = sec.getfloat(key)
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        if "n_min" in sec:
            kwargs["n_min"] = sec.getint("n_min")
        if "n_max" in sec:
            kwargs["n_max"] = sec.getint("n_max")
        if "schemes" in sec:
            tokens = [t.strip() for t in sec.get("schemes").split(",") if t.strip()]
            kwargs["schemes"] = tuple(tokens)
    if parser.has_section("run"):
        sec = parser["run"]
        if "out" in sec:
            kwargs["out_dir"] = sec.get("out")
        if "seed" in sec:
            kwargs["seed"] = sec.getint("seed")
    return ExperimentConfig(**kwargs)


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def sweep_rows(config: ExperimentConfig) -> dict[str, list[tuple[int, str, float]]]:
    """Evaluate all panel series over the configured range of group sizes."""
    panels: dict[str, list[tuple[int, str, float]]] = {name: [] for name in PANEL_SPECS}
    include = set(config.schemes)
    tables = scale_tables(config.params(max(config.n_min, 1)), config.n_max)
    for n in range(config.n_min, config.n_max + 1):
        p = config.params(n)
        coop_avg = conjugate(p.benefit, shared_unit_cost(p))
        nc_avg = conjugate(p.benefit, p.kappa)
        fs_avg = avg_utility_full_sharing(p, n)
        scenario_series = []
        if "cooperative" in include:
            scenario_series.append(("cooperative", coop_avg, (n - 1) * pareto_total_production(p)))
        if "none" in include:
            scenario_series.append(("noncooperative", nc_avg, 0.0))
        if "full_sharing" in include:
            scenario_series.append(
                ("full_sharing", fs_avg, (n - 1) * full_sharing_total_production(p))
            )
        for name, avg, volume in scenario_series:
            panels["individual_utility"].append((n, name, avg))
            panels["total_utility"].append((n, name, n * avg))
            panels["transfer_volume"].append((n, name, volume))
        panels["marginal_product"].append((n, "marginal_product", tables.marginal_product[n]))
        panels["marginal_product"].append((n, "avg_utility", tables.avg_utility[n]))
        metrics = inefficiency(p)
        panels["inefficiency"].append((n, "poa", metrics.poa))
        panels["inefficiency"].append((n, "pons", metrics.pons))
        panels["inefficiency"].append((n, "pou", metrics.pou))
        if "pricing" in include:
            panels["optimal_price"].append((n, "p_star", optimal_price(p)))
    return panels


def run_figure_sweep(
    config: ExperimentConfig, out_dir: str | Path | None = None, render: bool = True
) -> dict[str, Path]:
    """Write the six panel CSV files (and PNG renderings) to the output directory.

    CSV schema: header ``n,series,value`` with one row per (group size,
    series) pair; infinite values are serialized as the literal token
    ``inf``. Output is deterministic for a fixed config and seed.
    """
    out = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panels = sweep_rows(config)
    written: dict[str, Path] = {}
    for name, rows in panels.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write("n,series,value\n")
            for n, series, value in rows:
                fh.write(f"{n},{series},{_fmt(value)}\n")
        written[name] = path
    if render:
        for name, rows in panels.items():
            png = out / f"{name}.png"
            figures.render_panel(
                png, PANEL_SPECS[name], PANEL_SPECS[name], rows, logy=(name == "inefficiency")
            )
            written[f"{name}_png"] = png
    return written


# ---------------------------------------------------------------------------
# Report subcommands


def _kv(key: str, value) -> str:
    if isinstance(value, bool):
        return f"{key}={'true' if value else 'false'}"
    if isinstance(value, float):
        return f"{key}={_fmt(value)}"
    return f"{key}={value}"


def _report_solve(config: ExperimentConfig, args) -> list[str]:
    p = config.params(args.n)
    se = solve_noncooperative(p)
    pe = solve_pareto(p)
    fs = solve_full_sharing(p)
    metrics = inefficiency(p)
    lines = [
        f"solution concepts for {args.n} peers",
        f"  self-enforcing play: per-peer {se.utilities[0]:.6f}, no transfers",
        f"  cooperative optimum: per-peer {pe.utilities[0]:.6f}, "
        f"transfer volume {pe.transfer_volume:.6f}",
        f"  enforced full sharing: per-peer {fs.utilities[0]:.6f}, "
        f"transfer volume {fs.transfer_volume:.6f}",
        _kv("se_per_peer", float(se.utilities[0])),
        _kv("se_total", se.total_utility),
        _kv("se_transfer_volume", se.transfer_volume),
        _kv("pe_per_peer", float(pe.utilities[0])),
        _kv("pe_total", pe.total_utility),
        _kv("pe_transfer_volume", pe.transfer_volume),
        _kv("fs_per_peer", float(fs.utilities[0])),
        _kv("fs_total", fs.total_utility),
        _kv("fs_transfer_volume", fs.transfer_volume),
        _kv("poa", metrics.poa),
        _kv("pons", metrics.pons),
        _kv("pou", metrics.pou),
    ]
    return lines


def _report_core(config: ExperimentConfig, args) -> list[str]:
    p = config.params(args.n)
    vertices = sorted(core_vertices(p))
    centroid = np.mean(np.asarray(vertices), axis=0)
    shap = shapley(p)
    match = bool(np.max(np.abs(centroid - shap)) < 1e-9)
    lines = [f"core of the sharing game with {args.n} peers: {len(vertices)} vertices"]
    for idx, v in enumerate(vertices):
        lines.append(_kv(f"vertex_{idx}", ",".join(_fmt(c) for c in v)))
    lines.append(_kv("vertex_count", len(vertices)))
    lines.append(_kv("centroid", ",".join(_fmt(float(c)) for c in centroid)))
    lines.append(_kv("shapley", ",".join(_fmt(float(c)) for c in shap)))
    lines.append(_kv("centroid_matches_shapley", match))
    return lines


def _report_shapley(config: ExperimentConfig, args) -> list[str]:
    p = config.params(args.n)
    shap = shapley(p)
    return [
        f"Shapley value with {args.n} peers: {shap[0]:.6f} per peer",
        _kv("shapley_per_peer", float(shap[0])),
        _kv("shapley_total", float(shap.sum())),
    ]


def _report_price_dynamics(config: ExperimentConfig, args, out: Path | None) -> list[str]:
    p = config.params(args.n)
    p_star = optimal_price(p)
    result = run_price_adjustment(
        p, p0=args.p0 * p_star, eta=args.eta, max_iters=args.max_iters
    )
    lines = [
        f"price adjustment from {args.p0} x optimal price "
        f"({'converged' if result.converged else 'did not converge'} "
        f"after {result.iterations} iterations)",
        _kv("converged", result.converged),
        _kv("p_final", float(result.prices[-1])),
        _kv("p_star", p_star),
        _kv("iterations", result.iterations),
    ]
    if out is not None:
        png = out / "price_dynamics.png"
        figures.render_price_trajectory(png, result.prices, p_star)
        lines.append(_kv("figure", png))
    return lines


def _report_quantity_dynamics(config: ExperimentConfig, args, out: Path | None) -> list[str]:
    p = config.params(args.n)
    target = pareto_total_production(p)
    rng = np.random.default_rng(config.seed)
    x0 = rng.uniform(0.0, target, size=args.n)
    result = run_quantity_adjustment(p, x0, max_iters=args.max_iters)
    lines = [
        f"quantity adjustment over {args.n} peers "
        f"({'converged' if result.converged else 'did not converge'} "
        f"after {result.iterations} iterations)",
        _kv("converged", result.converged),
        _kv("total_final", float(result.x_path[-1].sum())),
        _kv("target_total", target),
        _kv("iterations", result.iterations),
    ]
    if out is not None:
        png = out / "quantity_dynamics.png"
        figures.render_quantity_trajectory(png, result.x_path, target)
        lines.append(_kv("figure", png))
    return lines


def _report_intervention(config: ExperimentConfig, args) -> list[str]:
    p = config.params(args.n)
    outcome = intervention_outcome(p)
    return [
        f"optimal intervention with {args.n} peers: symmetric efficient split, "
        "zero intervention at equilibrium",
        _kv("per_peer_payoff", float(outcome.report.utilities[0])),
        _kv("per_peer_production", float(outcome.report.allocation.x[0])),
        _kv("rating_min", float(np.min(outcome.ratings))),
        _kv("max_intervention_level", float(np.max(outcome.levels))),
        _kv("price_threat", outcome.scheme.p_star),
    ]


def _report_repeated(config: ExperimentConfig, args) -> list[str]:
    p = config.params(args.n)
    target = solve_pareto(p)
    deviant = args.deviant if args.deviant is not None else 0
    stats = grim_trigger_run(
        p,
        target.allocation,
        deviant=deviant,
        deviation_round=args.deviation_round,
        rounds=args.horizon,
    )
    means = stats.running_means()[-1]
    cooperative_utility = float(target.utilities[deviant])
    autarky = conjugate(p.benefit, p.kappa)
    deviant_mean = float(means[deviant])
    lines = [
        f"grim trigger over {args.horizon} rounds, deviation at round {args.deviation_round}",
        f"  deviant long-run average {deviant_mean:.6f} vs cooperative {cooperative_utility:.6f}",
        _kv("deviant_mean", deviant_mean),
        _kv("cooperative_utility", cooperative_utility),
        _kv("autarky_utility", autarky),
        _kv("deviation_erased", deviant_mean < cooperative_utility),
        _kv(
            "detected_round",
            stats.deviation_detected_round + 1
            if stats.deviation_detected_round is not None
            else -1,
        ),
    ]
    return lines


def _report_group_size(config: ExperimentConfig, args) -> list[str]:
    p = config.params(max(config.n_min, 2))
    result = optimal_group_size(p)
    lines = [
        "optimal group size under enforced full sharing",
        f"  searched sizes 1..{result.searched_max}",
        f"  N*={result.n_star} (average utility {result.peak_value:.6f})",
        _kv("n_star", result.n_star),
        _kv("searched_max", result.searched_max),
        _kv("peak_value", result.peak_value),
        _kv("tie", result.is_tie),
    ]
    if args.total_n is not None:
        core = vfs_core(p, args.total_n)
        lines.append(_kv("vfs_core_empty", core.is_empty))
        if not core.is_empty:
            lines.append(_kv("vfs_core_per_peer", core.profile[0]))
        else:
            lines.append(
                _kv("blocking_coalition", ",".join(str(i) for i in core.witness.coalition))
            )
    return lines


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise ValueError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="cpsgame", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="path to a key=value config file")
    parser.add_argument("--out", type=str, default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", description="write the six panel data series")
    sweep.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    solve = sub.add_parser("solve", description="all solution concepts for one group size")
    solve.add_argument("--n", type=int, default=10)

    core = sub.add_parser("core", description="core vertices and Shapley value")
    core.add_argument("--n", type=int, default=3)

    shap = sub.add_parser("shapley", description="Shapley value")
    shap.add_argument("--n", type=int, default=10)

    price = sub.add_parser("price-dynamics", description="price adjustment run")
    price.add_argument("--n", type=int, default=10)
    price.add_argument(
        "--p0", type=float, default=0.5, help="initial price as a multiple of the optimal price"
    )
    price.add_argument("--eta", type=float, default=1.0)
    price.add_argument("--max-iters", type=int, default=100_000)

    qty = sub.add_parser("quantity-dynamics", description="quantity adjustment run")
    qty.add_argument("--n", type=int, default=10)
    qty.add_argument("--max-iters", type=int, default=100_000)

    interv = sub.add_parser("intervention", description="optimal intervention outcome")
    interv.add_argument("--n", type=int, default=10)

    rep = sub.add_parser("repeated", description="grim-trigger repeated play")
    rep.add_argument("--n", type=int, default=3)
    rep.add_argument("--deviation-round", type=int, default=10)
    rep.add_argument("--horizon", type=int, default=10_000)
    rep.add_argument("--deviant", type=int, default=None)

    group = sub.add_parser("group-size", description="optimal full-sharing group size")
    group.add_argument(
        "--total-n", type=int, default=None, help="also report the group-formation core"
    )
    return parser


def _dispatch_report(config: ExperimentConfig, args, out: Path | None) -> list[str]:
    if args.command == "price-dynamics":
        return _report_price_dynamics(config, args, out)
    if args.command == "quantity-dynamics":
        return _report_quantity_dynamics(config, args, out)
    if args.command == "solve":
        return _report_solve(config, args)
    if args.command == "core":
        return _report_core(config, args)
    if args.command == "shapley":
        return _report_shapley(config, args)
    if args.command == "intervention":
        return _report_intervention(config, args)
    if args.command == "repeated":
        return _report_repeated(config, args)
    if args.command == "group-size":
        return _report_group_size(config, args)
    raise ValueError(f"unknown subcommand {args.command!r}")


def run_report(
    config: ExperimentConfig,
    subcommand: str,
    out_dir: str | Path | None = None,
    **options,
) -> list[str]:
    """Execute one report subcommand and return its printable lines.

    ``options`` are the subcommand's CLI flags with underscores for dashes
    (for example ``deviation_round=10``). Passing ``out_dir`` enables the
    trajectory figures of the dynamics reports.
    """
    if subcommand not in REPORT_SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    argv = [subcommand]
    for key, value in options.items():
        argv.extend([f"--{key.replace('_', '-')}", str(value)])
    args = build_parser().parse_args(argv)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    return _dispatch_report(config, args, out)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        out = Path(config.out_dir)
        if args.command == "sweep":
            written = run_figure_sweep(config, out, render=not args.no_figures)
            for name in PANEL_SPECS:
                print(_kv(f"csv_{name}", written[name]))
            return EXIT_OK
        if args.command in ("price-dynamics", "quantity-dynamics"):
            out.mkdir(parents=True, exist_ok=True)
            lines = _dispatch_report(config, args, out)
        else:
            lines = _dispatch_report(config, args, None)
        for line in lines:
            print(line)
        return EXIT_OK
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry_point() -> None:  # pragma: no cover - console script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    entry_point()
