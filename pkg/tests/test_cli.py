"""Config parsing, sweep output schema and determinism, report subcommands."""

import math
from pathlib import Path

import pytest
from conftest import ref_params

from cpsgame import conjugate, optimal_price, shared_unit_cost
from cpsgame.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_PRECONDITION,
    ExperimentConfig,
    load_config,
    main,
    run_figure_sweep,
    run_report,
    sweep_rows,
)

GOLDEN_DIR = Path(__file__).parent / "golden"

PANEL_NAMES = (
    "individual_utility",
    "total_utility",
    "marginal_product",
    "inefficiency",
    "transfer_volume",
    "optimal_price",
)


def read_rows(path: Path):
    lines = path.read_text().splitlines()
    assert lines[0] == "n,series,value"
    rows = []
    for line in lines[1:]:
        n, series, value = line.split(",")
        rows.append((int(n), series, float(value)))
    return rows


class TestConfig:
    def test_defaults_are_the_reference_setup(self):
        c = ExperimentConfig()
        assert (c.kappa, c.delta, c.sigma) == (0.3, 0.0025, 0.01)
        assert (c.n_min, c.n_max) == (1, 100)
        assert c.benefit_kind == "log"

    def test_load_round_trip(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "[benefit]\nkind = log\n\n"
            "[costs]\nkappa = 0.4\ndelta = 0.01\nsigma = 0.02\n\n"
            "[sweep]\nn_min = 2\nn_max = 20\nschemes = cooperative,none,pricing\n\n"
            "[run]\nout = artifacts\nseed = 7\n"
        )
        c = load_config(cfg)
        assert c.kappa == 0.4
        assert c.n_max == 20
        assert c.schemes == ("cooperative", "none", "pricing")
        assert c.out_dir == "artifacts"
        assert c.seed == 7

    def test_distinct_files_benefit_selection(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[benefit]\nkind = distinct_files\nper_file_benefit = 2.0\ntotal_files = 100\n")
        c = load_config(cfg)
        p = c.params(3)
        assert p.benefit.label.startswith("distinct_files")

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[costs]\nkapa = 0.4\n")
        with pytest.raises(ValueError, match="unknown config key"):
            load_config(cfg)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError, match="unknown schemes"):
            ExperimentConfig(schemes=("bogus",))

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "nope.cfg")


class TestSweep:
    def test_writes_all_six_panels(self, tmp_path):
        paths = run_figure_sweep(ExperimentConfig(n_max=12), tmp_path, render=False)
        for name in PANEL_NAMES:
            assert paths[name].exists()
            rows = read_rows(paths[name])
            assert {r[0] for r in rows} == set(range(1, 13))

    def test_byte_identical_on_rerun(self, tmp_path):
        config = ExperimentConfig(n_max=25)
        a = run_figure_sweep(config, tmp_path / "a", render=False)
        b = run_figure_sweep(config, tmp_path / "b", render=False)
        for name in PANEL_NAMES:
            assert a[name].read_bytes() == b[name].read_bytes()

    def test_matches_golden_files(self, tmp_path):
        paths = run_figure_sweep(ExperimentConfig(), tmp_path, render=False)
        for name in PANEL_NAMES:
            golden = (GOLDEN_DIR / f"{name}.csv").read_bytes()
            assert paths[name].read_bytes() == golden

    def test_infinite_ratio_serialized_as_inf_token(self, tmp_path):
        paths = run_figure_sweep(ExperimentConfig(), tmp_path, render=False)
        lines = paths["inefficiency"].read_text().splitlines()
        assert "71,pons,inf" in lines
        assert "100,pons,inf" in lines

    def test_values_rederivable_from_library(self):
        config = ExperimentConfig(n_max=40)
        panels = sweep_rows(config)
        p17 = ref_params(17)
        coop = {(n, s): v for n, s, v in panels["individual_utility"]}
        assert coop[(17, "cooperative")] == conjugate(p17.benefit, shared_unit_cost(p17))
        price = {(n, s): v for n, s, v in panels["optimal_price"]}
        assert price[(17, "p_star")] == optimal_price(p17)

    def test_scheme_filter_drops_series(self, tmp_path):
        config = ExperimentConfig(n_max=5, schemes=("cooperative", "none"))
        paths = run_figure_sweep(config, tmp_path, render=False)
        series = {r[1] for r in read_rows(paths["individual_utility"])}
        assert series == {"cooperative", "noncooperative"}
        assert read_rows(paths["optimal_price"]) == []

    def test_renders_figures(self, tmp_path):
        paths = run_figure_sweep(ExperimentConfig(n_max=8), tmp_path, render=True)
        for name in PANEL_NAMES:
            png = paths[f"{name}_png"]
            assert png.exists()
            assert png.stat().st_size > 1000


class TestCliCommands:
    def test_sweep_command(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path), "sweep", "--no-figures"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        for name in PANEL_NAMES:
            assert f"csv_{name}=" in out
            assert (tmp_path / f"{name}.csv").exists()

    def test_group_size_report(self, capsys):
        code = main(["group-size"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "N*=5" in out
        assert "n_star=5" in out
        assert "searched_max=71" in out

    def test_core_report_two_peers(self, capsys):
        code = main(["core", "--n", "2"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "vertex_count=2" in out
        assert "centroid_matches_shapley=true" in out

    def test_price_dynamics_report(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path), "price-dynamics", "--p0", "0.5"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "converged=true" in out
        p_final = float(out.split("p_final=")[1].splitlines()[0])
        p_star = float(out.split("p_star=")[1].splitlines()[0])
        assert abs(p_final - p_star) < 1e-4
        assert (tmp_path / "price_dynamics.png").exists()

    def test_quantity_dynamics_report(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path), "--seed", "3", "quantity-dynamics", "--n", "5"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "converged=true" in out
        assert (tmp_path / "quantity_dynamics.png").exists()

    def test_solve_report(self, capsys):
        code = main(["solve", "--n", "2"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        se = float(out.split("se_per_peer=")[1].splitlines()[0])
        pe = float(out.split("pe_per_peer=")[1].splitlines()[0])
        assert se == pytest.approx(-math.log(0.3) - 0.7, abs=1e-9)
        assert pe == pytest.approx(-math.log(0.15625) - 1 + 0.15625, abs=1e-9)

    def test_shapley_report(self, capsys):
        code = main(["shapley", "--n", "2"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        val = float(out.split("shapley_per_peer=")[1].splitlines()[0])
        assert val == pytest.approx(-math.log(0.15625) - 1 + 0.15625, abs=1e-9)

    def test_intervention_report(self, capsys):
        code = main(["intervention", "--n", "2"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "max_intervention_level=0.0" in out
        assert "rating_min=1.0" in out

    def test_repeated_report(self, capsys):
        code = main(["repeated", "--n", "2", "--horizon", "400"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "deviation_erased=true" in out
        assert "detected_round=10" in out

    def test_run_report_library_entry(self):
        lines = run_report(ExperimentConfig(), "group-size")
        assert any(line == "n_star=5" for line in lines)
        lines = run_report(ExperimentConfig(), "repeated", n=2, horizon=300)
        assert any(line.startswith("deviant_mean=") for line in lines)
        with pytest.raises(ValueError, match="unknown subcommand"):
            run_report(ExperimentConfig(), "sweepify")

    def test_config_flag(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[sweep]\nn_min = 1\nn_max = 6\n")
        code = main(["--config", str(cfg), "--out", str(tmp_path / "out"), "sweep", "--no-figures"])
        assert code == EXIT_OK
        rows = read_rows(tmp_path / "out" / "individual_utility.csv")
        assert max(r[0] for r in rows) == 6


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert main(["bogus"]) == EXIT_PRECONDITION
        assert "error" in capsys.readouterr().err

    def test_precondition_failure(self, capsys):
        # Vertex enumeration is guarded beyond eight peers.
        assert main(["core", "--n", "12"]) == EXIT_PRECONDITION
        assert "is_in_core" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[costs]\nbogus = 1\n")
        assert main(["--config", str(cfg), "group-size"]) == EXIT_PRECONDITION

    def test_missing_config_is_io_failure(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "nope.cfg"), "group-size"]) == EXIT_IO

    def test_unwritable_output_is_io_failure(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("x")
        out = blocker / "sub"
        assert main(["--out", str(out), "sweep", "--no-figures"]) == EXIT_IO
