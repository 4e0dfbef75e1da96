"""Tests for the experiment harness: reports, determinism, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from multiscale_spde.cli import main
from multiscale_spde.errors import FitFailed
from multiscale_spde.experiments import (
    ExperimentReport,
    batch_mean_se,
    config_hash,
    emit_report,
    fit_rate_with_exclusion,
    run_cell_study,
    run_coupling_convergence,
    run_noise_check,
    run_simulate,
    run_study,
    run_variance_study,
)

REPO = Path(__file__).resolve().parent.parent
DEMO_CONFIG = REPO / "configs" / "demo-variance.json"
GOLDEN = Path(__file__).resolve().parent / "golden" / "demo_report.json"

SMALL_VARIANCE = {
    "coefficients": {"name": "cosine-potential", "amplitude": 1.0},
    "noise": {"family": "white", "cutoff": 8},
    "solver": {"eps": [0.25, 0.125], "t_final": 5.0, "watch": [1]},
    "study": {"kind": "variance", "target": "enhanced", "seed": 9,
              "tolerances": {"final_gap": 0.5}},
}


class TestFitting:
    def test_plain_rate_fit(self):
        eps = [0.25, 0.125, 0.0625, 0.03125]
        vals = [0.1 * e**1.5 for e in eps]
        fit = fit_rate_with_exclusion(eps, vals)
        assert_allclose(fit["theta"], 1.5, rtol=1e-12)
        assert not fit["excluded_coarsest"]

    def test_pre_asymptotic_point_is_dropped(self):
        eps = [0.25, 0.125, 0.0625, 0.03125]
        vals = [0.1 * e**1.5 for e in eps]
        vals[0] *= 30.0
        fit = fit_rate_with_exclusion(eps, vals)
        assert fit["excluded_coarsest"]
        assert_allclose(fit["theta"], 1.5, rtol=1e-12)

    def test_too_few_points(self):
        with pytest.raises(FitFailed):
            fit_rate_with_exclusion([0.25, 0.125], [1.0, 0.5])

    def test_batch_mean_se(self):
        rng = np.random.default_rng(0)
        vals = rng.normal(3.0, 1.0, 400)
        mean, se = batch_mean_se(vals)
        assert_allclose(mean, vals.mean())
        assert 0.0 < se < 0.2


class TestReports:
    def test_bitwise_determinism(self):
        a = run_study(SMALL_VARIANCE).to_json_bytes()
        b = run_study(SMALL_VARIANCE).to_json_bytes()
        assert a == b

    def test_emit_round_trip_and_idempotence(self, tmp_path):
        report = run_study(SMALL_VARIANCE)
        files = emit_report(report, tmp_path)
        names = {f.name for f in files}
        assert "report.json" in names and "rows.csv" in names
        again = emit_report(report, tmp_path)
        for f, g in zip(files, again):
            assert f.read_bytes() == g.read_bytes()
        loaded = json.loads((tmp_path / "report.json").read_text())
        assert loaded == report.to_dict()

    def test_empty_report_gives_header_only_csv(self, tmp_path):
        report = ExperimentReport(study="empty", config={}, seed=0)
        report.tables["table"] = (["a", "b"], [])
        files = emit_report(report, tmp_path)
        content = (tmp_path / "table.csv").read_bytes()
        assert content == b"a,b\n"

    def test_csv_format(self, tmp_path):
        report = ExperimentReport(study="fmt", config={}, seed=0)
        report.tables["t"] = (["x", "y"], [[0.5, 1], [1.5, 2]])
        emit_report(report, tmp_path)
        text = (tmp_path / "t.csv").read_bytes()
        assert b"\r" not in text
        assert text.decode().splitlines() == ["x,y", "0.5,1", "1.5,2"]

    def test_config_hash_is_order_insensitive(self):
        a = {"x": 1, "y": {"b": 2.0, "a": [1, 2]}}
        b = {"y": {"a": [1, 2], "b": 2.0}, "x": 1}
        assert config_hash(a) == config_hash(b)


class TestStudies:
    def test_cell_study_passes(self):
        report = run_cell_study({
            "coefficients": {"name": "cosine-potential", "amplitude": 1.0},
            "study": {"kind": "cell", "seed": 3},
        })
        assert report.passed
        row = report.rows[0]
        assert_allclose(row["mu"], 0.096218, atol=5e-7)
        assert row["rho_norm"] > 1.0

    def test_noise_check_report(self):
        report = run_noise_check({
            "noise": {"family": "tail", "tail": "one-plus-cos", "tail_rate": 1.0,
                      "ripple": "cos", "cutoff": 256, "eta": 0.0},
            "study": {"kind": "noise-check", "seed": 0},
        })
        assert report.passed
        assert len(report.verdicts) == 3

    def test_trivial_cell_convergence_hits_floor(self):
        report = run_coupling_convergence({
            "coefficients": {"name": "heat"},
            "noise": {"family": "power", "alpha": 0.75, "profile": "one",
                      "cutoff_factor": 2.0},
            "solver": {"eps": [0.25, 0.125, 0.0625], "t_final": 0.3},
            "study": {"kind": "converge", "seed": 4, "paths": 8, "mode_cutoff": 3},
        })
        assert report.passed
        assert report.fit is None
        assert all(r["error"] == 0.0 for r in report.rows)

    def test_variance_study_rows_and_tables(self):
        report = run_variance_study(SMALL_VARIANCE)
        assert {r["eps"] for r in report.rows} == {0.25, 0.125}
        assert any(name.startswith("covariance_eps") for name in report.tables)

    def test_simulate_study_emits_per_path_tables(self, tmp_path):
        report = run_simulate({
            "coefficients": {"name": "heat"},
            "noise": {"family": "white", "cutoff": 2},
            "solver": {"eps": [0.5], "t_final": 0.05, "watch": [1]},
            "study": {"kind": "simulate", "seed": 1, "paths": 2},
        })
        files = emit_report(report, tmp_path)
        names = {f.name for f in files}
        assert {"path_000.csv", "path_001.csv"} <= names
        header = (tmp_path / "path_000.csv").read_text().splitlines()[0]
        assert header == "t,m,re,im"


class TestConfigBuilders:
    def test_explicit_mode_lists_match_builtin(self):
        from multiscale_spde.experiments import build_coefficients
        from multiscale_spde.cell import Coefficients
        from multiscale_spde.fourier import l2_norm

        explicit = build_coefficients({
            "b": [[1, 0.0, -0.5], [-1, 0.0, 0.5]],
            "sigma": [[0, 1.0, 0.0]],
        })
        builtin = Coefficients.cosine_potential(1.0)
        assert l2_norm(explicit.b - builtin.b) == 0.0
        assert l2_norm(explicit.sigma - builtin.sigma) == 0.0

    def test_solver_overrides_are_honoured(self):
        from multiscale_spde.experiments import _solver_config
        from multiscale_spde.cell import Coefficients

        c = Coefficients.cosine_potential(1.0)
        sc = _solver_config({"dt": 5e-4, "n_modes": 96, "scheme": "imex-cn"},
                            c, 0.25, 8, seed=1, default_t=2.0, watch=(1,))
        assert sc.dt == 5e-4 and sc.n_modes == 96 and sc.scheme == "imex-cn"
        assert sc.t_final == 2.0

    def test_cutoff_factor_scales_with_eps(self):
        from multiscale_spde.experiments import resolve_cutoff
        assert resolve_cutoff({"cutoff_factor": 2.0}, 0.125) == 16
        assert resolve_cutoff({"cutoff": 12}, 0.125) == 12
        with pytest.raises(ValueError):
            resolve_cutoff({}, None)


class TestCli:
    def test_cell_subcommand(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "coefficients": {"name": "heat"},
            "study": {"seed": 1},
        }))
        code = main(["cell", "--config", str(cfg), "--out", str(tmp_path / "out"),
                     "--quiet"])
        assert code == 0
        assert (tmp_path / "out" / "report.json").exists()

    def test_seed_override_changes_provenance(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "coefficients": {"name": "heat"},
            "study": {"seed": 1},
        }))
        out = tmp_path / "out"
        main(["cell", "--config", str(cfg), "--out", str(out), "--seed", "42",
              "--quiet"])
        loaded = json.loads((out / "report.json").read_text())
        assert loaded["provenance"]["seed"] == 42


class TestGolden:
    def test_demo_config_matches_frozen_report(self):
        """Byte-exact reproduction of the shipped demo study."""
        config = json.loads(DEMO_CONFIG.read_text())
        report = run_study(config)
        assert report.to_json_bytes() == GOLDEN.read_bytes()

    def test_cli_emission_is_location_independent(self, tmp_path):
        """The emitted report does not depend on the output directory."""
        code = main(["variance", "--config", str(DEMO_CONFIG),
                     "--out", str(tmp_path / "anywhere"), "--quiet"])
        assert code == 0
        emitted = (tmp_path / "anywhere" / "report.json").read_bytes()
        assert emitted == GOLDEN.read_bytes()
