import json
import math

import pytest

from bdbench.cli import main as cli_main
from bdbench.errors import ConfigError
from bdbench.harness import (
    CSV_HEADER,
    ResultRow,
    emit_results,
    load_config,
    resolve_noise,
    run_experiment,
)

TINY = """
[ou-verify]
trajectories = 4000

[longtime-1d]
total_time = 8.0e3
realizations = 3
equilibration_steps = 500

[finite-time-1d]
trajectories = 15000

[lj-rdf]
window_time = 12.0
equilibration_steps = 500
realizations = 2
realizations_lm = 3
baseline_steps = 8000
baseline_realizations = 2
"""


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.ini"
    path.write_text(TINY)
    return str(path)


class TestConfig:
    def test_builtin_scales_load(self):
        for exp in ("ou-verify", "longtime-1d", "finite-time-1d", "lj-rdf"):
            cfgs = {}
            for scale in ("desk", "paper"):
                cfgs[scale] = load_config(exp, scale=scale)
                assert cfgs[scale].sigma > 0 and cfgs[scale].beta > 0
            # scales differ only in sizes, never in shape: same key sets
            assert set(cfgs["desk"].values) == set(cfgs["paper"].values)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[longtime-1d]\nnot_a_key = 3\n")
        with pytest.raises(ConfigError):
            load_config("longtime-1d", config_path=str(p))

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[mystery]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config("longtime-1d", config_path=str(p))

    def test_beta_sigma_exclusive(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[longtime-1d]\nbeta = 1.0\nsigma = 1.0\n")
        with pytest.raises(ConfigError):
            load_config("longtime-1d", config_path=str(p))

    def test_sigma_overrides_builtin_beta(self, tmp_path):
        p = tmp_path / "ok.ini"
        p.write_text("[longtime-1d]\nsigma = 1.0\n")
        cfg = load_config("longtime-1d", config_path=str(p))
        assert cfg.sigma == 1.0 and cfg.beta == 2.0

    def test_beta_derives_sigma(self):
        beta, sigma = resolve_noise(10.0, None)
        assert sigma == pytest.approx(math.sqrt(0.2), rel=1e-15)
        cfg = load_config("lj-rdf", scale="desk")
        assert cfg.resolved_dict()["sigma"] == pytest.approx(math.sqrt(0.2), rel=1e-15)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            load_config("nope")

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("longtime-1d", config_path="/does/not/exist.ini")

    def test_bad_scheme_name(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[longtime-1d]\nschemes = em,zz\n")
        with pytest.raises(ConfigError):
            load_config("longtime-1d", config_path=str(p))


class TestEmission:
    def test_single_row_two_lines(self, tmp_path):
        row = ResultRow("ou-verify", "em", 0.1, 10.0, "mean", 0.5, 0.01, 3, 300, 0, 7)
        path = tmp_path / "r.csv"
        emit_results([row], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == CSV_HEADER

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_results([], tmp_path / "r.csv")

    def test_none_fields_empty(self, tmp_path):
        row = ResultRow("x", "em", None, None, "slope", 1.0, None, 0, 0, 0, 0)
        path = tmp_path / "r.csv"
        emit_results([row], path)
        assert path.read_text().splitlines()[1] == "x,em,,,slope,1.0,,0,0,0,0"


class TestDeterminism:
    @pytest.mark.parametrize("experiment", ["ou-verify", "longtime-1d", "finite-time-1d", "lj-rdf"])
    def test_worker_count_invariance(self, experiment, tiny_cfg, tmp_path):
        outs = []
        for workers in (1, 2):
            out = tmp_path / f"w{workers}"
            cfg = load_config(experiment, scale="desk", seed=5, config_path=tiny_cfg)
            run_experiment(cfg, str(out), workers=workers)
            outs.append((out / "results.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_rerun_byte_identical(self, tiny_cfg, tmp_path):
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = load_config("longtime-1d", scale="desk", seed=9, config_path=tiny_cfg)
            run_experiment(cfg, str(out), workers=2)
            blobs.append((out / "results.csv").read_bytes() + (out / "config.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_changes_results(self, tiny_cfg, tmp_path):
        vals = []
        for seed in (1, 2):
            cfg = load_config("ou-verify", scale="desk", seed=seed, config_path=tiny_cfg)
            rows = run_experiment(cfg, str(tmp_path / f"s{seed}"), workers=1)
            vals.append([r.value for r in rows if r.metric == "mean"])
        assert vals[0] != vals[1]


class TestExperimentContracts:
    def test_ou_force_eval_ledger(self, tiny_cfg, tmp_path):
        cfg = load_config("ou-verify", scale="desk", seed=1, config_path=tiny_cfg)
        rows = run_experiment(cfg, str(tmp_path / "ou"), workers=2)
        n_steps = round(cfg.tau / cfg.h)
        for scheme, cost in (("em", 1), ("lm", 1), ("heun", 2)):
            r = next(r for r in rows if r.scheme == scheme and r.metric == "mean")
            assert r.force_evals == cfg.trajectories * n_steps * cost
            assert r.rejected == 0

    def test_ou_z_scores_sane(self, tiny_cfg, tmp_path):
        cfg = load_config("ou-verify", scale="desk", seed=3, config_path=tiny_cfg)
        rows = run_experiment(cfg, str(tmp_path / "ou"), workers=2)
        for r in rows:
            if r.metric in ("z_mean_scheme", "z_var_scheme"):
                assert abs(r.value) < 5.0

    def test_ou_formula_ladder_em_first_order(self, tiny_cfg, tmp_path):
        cfg = load_config("ou-verify", scale="desk", seed=1, config_path=tiny_cfg)
        rows = run_experiment(cfg, str(tmp_path / "ou"), workers=1)
        slope = next(r for r in rows if r.scheme == "em" and r.metric == "var_formula_order")
        assert 0.85 <= slope.value <= 1.15

    def test_longtime_rows_and_dumps(self, tiny_cfg, tmp_path):
        cfg = load_config("longtime-1d", scale="desk", seed=2, config_path=tiny_cfg)
        out = tmp_path / "lt"
        rows = run_experiment(cfg, str(out), workers=2)
        metrics = {r.metric for r in rows}
        assert {"l2", "kl", "l2_slope", "kl_slope"} <= metrics
        ref = (out / "reference.csv").read_text().splitlines()
        assert ref[0] == "bin_lower,bin_upper,mass"
        assert len(ref) == cfg.bins + 1
        mass = sum(float(line.split(",")[2]) for line in ref[1:])
        assert mass == pytest.approx(1.0, abs=1e-12)
        n_steps = round(cfg.total_time / 0.2)
        r0 = next(r for r in rows if r.scheme == "em" and r.h == 0.2 and r.metric == "l2")
        assert r0.force_evals == cfg.realizations * n_steps

    def test_finite_time_t0_error_exactly_zero(self, tiny_cfg, tmp_path):
        cfg = load_config("finite-time-1d", scale="desk", seed=4, config_path=tiny_cfg)
        rows = run_experiment(cfg, str(tmp_path / "ft"), workers=2)
        zero_rows = [r for r in rows if r.metric == "l2" and r.time == 0.0]
        assert len(zero_rows) == len(cfg.schemes) * len(cfg.h_values)
        assert all(r.value == 0.0 for r in zero_rows)

    def test_finite_time_snapshot_times_exact(self, tiny_cfg, tmp_path):
        cfg = load_config("finite-time-1d", scale="desk", seed=4, config_path=tiny_cfg)
        rows = run_experiment(cfg, str(tmp_path / "ft"), workers=1)
        times = sorted({r.time for r in rows if r.metric == "l2" and r.scheme == "em" and r.h == 0.16})
        assert times == pytest.approx([0.96 * j for j in range(10)], abs=1e-12)

    def test_lj_rejected_restart_accounting(self, tmp_path):
        # Force frequent explosions with an unstable stepsize and check the
        # rejected counter is reported and the run still completes.
        p = tmp_path / "hot.ini"
        p.write_text(
            "[lj-rdf]\nwindow_time = 65.0\nequilibration_steps = 200\n"
            "h_ladder_start = 0.013\nh_ladder_ratio = 1.05\nh_ladder_count = 3\n"
            "realizations = 2\nrealizations_lm = 2\nbaseline_steps = 4000\n"
            "baseline_realizations = 1\nschemes = em\n"
        )
        cfg = load_config("lj-rdf", scale="desk", seed=6, config_path=str(p))
        rows = run_experiment(cfg, str(tmp_path / "lj"), workers=2)
        total_rejected = sum(r.rejected for r in rows if r.metric == "l2")
        assert total_rejected > 0

    def test_sidecar_contents(self, tiny_cfg, tmp_path):
        cfg = load_config("lj-rdf", scale="desk", seed=11, config_path=tiny_cfg)
        out = tmp_path / "lj"
        run_experiment(cfg, str(out), workers=1)
        side = json.loads((out / "config.json").read_text())
        assert side["seed"] == 11
        assert side["scale"] == "desk"
        assert side["beta"] == 10.0
        assert side["sigma"] == pytest.approx(math.sqrt(0.2), rel=1e-15)


class TestCli:
    def test_run_and_fit_order(self, tiny_cfg, tmp_path, capsys):
        out = tmp_path / "cli_lt"
        rc = cli_main(
            ["longtime-1d", "--config", tiny_cfg, "--scale", "desk", "--seed", "3",
             "--out", str(out), "--workers", "2"]
        )
        assert rc == 0
        assert (out / "results.csv").exists()
        rc = cli_main(["fit-order", str(out / "results.csv"), "--scheme", "em", "--metric", "l2"])
        assert rc == 0
        captured = capsys.readouterr().out
        assert "slope:" in captured

    def test_fit_order_needs_points(self, tmp_path, capsys):
        p = tmp_path / "r.csv"
        p.write_text(CSV_HEADER + "\n")
        assert cli_main(["fit-order", str(p), "--scheme", "em"]) == 1

    def test_bad_config_reports_error(self, tmp_path, capsys):
        p = tmp_path / "bad.ini"
        p.write_text("[longtime-1d]\nwat = 1\n")
        rc = cli_main(["longtime-1d", "--config", str(p), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
