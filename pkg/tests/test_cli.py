import json

import pandas as pd
import pytest

from app import build_parser, build_run_config, dispatch


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = dispatch(["simulate", "--model", "1", "--target-m", "120", "--grid", "32", "--seed", "3", "-o", str(out)])
    assert code == 0
    return out


def inputs(simulated) -> list[str]:
    return ["--covariate", str(simulated / "covariate.asc"), "--pattern", str(simulated / "pattern.csv")]


class TestSimulate:
    def test_outputs(self, simulated):
        for name in ("covariate.asc", "intensity.asc", "pattern.csv", "manifest.json", "run.log"):
            assert (simulated / name).exists()
        manifest = json.loads((simulated / "manifest.json").read_text())
        assert manifest["tool"] == "covkern"
        assert manifest["config"]["command"] == "simulate"
        assert manifest["config"]["grf"]["ncols"] == 32

    def test_run_log(self, simulated):
        assert "Simulated model 1" in (simulated / "run.log").read_text()

    def test_field_follows_run_seed(self, simulated, tmp_path):
        other = tmp_path / "other"
        assert dispatch(["simulate", "--model", "1", "--target-m", "120", "--grid", "32", "--seed", "4", "-o", str(other)]) == 0
        assert (other / "covariate.asc").read_bytes() != (simulated / "covariate.asc").read_bytes()

    def test_explicit_field_seed_wins(self, tmp_path):
        for seed in ("3", "4"):
            args = ["simulate", "--grid", "16", "--grf-seed", "9", "--seed", seed, "-o", str(tmp_path / seed)]
            assert dispatch(args) == 0
        assert (tmp_path / "3" / "covariate.asc").read_bytes() == (tmp_path / "4" / "covariate.asc").read_bytes()
        assert (tmp_path / "3" / "pattern.csv").read_bytes() != (tmp_path / "4" / "pattern.csv").read_bytes()


def test_gstar(simulated, tmp_path):
    assert dispatch(["gstar", "--covariate", str(simulated / "covariate.asc"), "--n-z", "129", "-o", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "gstar.csv")
    assert list(df.columns) == ["z", "g_star", "G_star"]
    assert len(df) == 129


class TestEstimate:
    def test_weighted_is_reproducible(self, simulated, tmp_path):
        for name in ("a", "b"):
            args = ["estimate", *inputs(simulated), "--bandwidth", "auto:rt", "-o", str(tmp_path / name)]
            assert dispatch(args) == 0
        assert (tmp_path / "a" / "rho.csv").read_bytes() == (tmp_path / "b" / "rho.csv").read_bytes()
        report = json.loads((tmp_path / "a" / "bandwidth.json").read_text())
        assert report["method"] == "rt"

    def test_rerun_from_manifest(self, simulated, tmp_path):
        first = tmp_path / "first"
        assert dispatch(["estimate", *inputs(simulated), "--bandwidth", "0.05", "--seed", "4", "-o", str(first)]) == 0
        second = tmp_path / "second"
        assert dispatch(["estimate", "--from-manifest", str(first / "manifest.json"), "-o", str(second)]) == 0
        assert (first / "rho.csv").read_bytes() == (second / "rho.csv").read_bytes()
        assert (first / "intensity.asc").read_bytes() == (second / "intensity.asc").read_bytes()

    @pytest.mark.parametrize("estimator, bandwidth", [("guan", "0.05"), ("guan", "auto:cv"), ("diggle", "auto")])
    def test_baselines(self, simulated, tmp_path, estimator, bandwidth):
        args = ["estimate", *inputs(simulated), "--estimator", estimator, "--bandwidth", bandwidth, "-o", str(tmp_path)]
        assert dispatch(args) == 0
        assert (tmp_path / "intensity.asc").exists()

    def test_baseline_rejects_other_selectors(self, simulated, tmp_path):
        args = ["estimate", *inputs(simulated), "--estimator", "diggle", "--bandwidth", "auto:rt", "-o", str(tmp_path)]
        assert dispatch(args) == 2


class TestExitCodes:
    def test_unknown_command(self):
        assert dispatch(["smooth"]) == 1

    def test_bad_bandwidth(self, simulated, tmp_path):
        assert dispatch(["estimate", *inputs(simulated), "--bandwidth", "-3", "-o", str(tmp_path)]) == 1

    def test_unknown_selector(self, simulated, tmp_path):
        assert dispatch(["bandwidth", *inputs(simulated), "--selectors", "rt,plugin", "-o", str(tmp_path)]) == 1

    def test_missing_file(self, tmp_path):
        args = ["estimate", "--covariate", str(tmp_path / "nope.asc"), "--pattern", "p.csv", "-o", str(tmp_path / "o")]
        assert dispatch(args) == 2

    def test_missing_covariate_flag(self, tmp_path):
        assert dispatch(["gstar", "-o", str(tmp_path)]) == 2

    def test_malformed_raster(self, tmp_path):
        bad = tmp_path / "bad.asc"
        bad.write_text("ncols 2\nnrows 2\n")
        assert dispatch(["gstar", "--covariate", str(bad), "-o", str(tmp_path / "o")]) == 2

    def test_malformed_pattern(self, simulated, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("# window 0 0 1 1\nx,y\n0.4,0.5\n0.1,0.2,0.3\n")
        args = ["estimate", "--covariate", str(simulated / "covariate.asc"), "--pattern", str(bad), "-o", str(tmp_path / "o")]
        assert dispatch(args) == 2


def test_bandwidth_command(simulated, tmp_path):
    assert dispatch(["bandwidth", *inputs(simulated), "--selectors", "silverman,rt,cv", "-o", str(tmp_path)]) == 0
    reports = json.loads((tmp_path / "bandwidths.json").read_text())
    assert set(reports) == {"silverman", "rt", "cv"}
    assert all(r["h"] > 0 for r in reports.values())


def test_bootstrap_command(simulated, tmp_path):
    assert dispatch(["bootstrap", *inputs(simulated), "--h-grid-size", "5", "-o", str(tmp_path)]) == 0
    curve = pd.read_csv(tmp_path / "bootstrap_curve.csv")
    assert list(curve.columns) == ["h", "amise_star", "mise_star", "mise_star_exact"]
    assert len(curve) == 5
    world = pd.read_csv(tmp_path / "bootstrap_world.csv")
    assert list(world.columns) == ["z", "rho_b", "f_tilde"]


def test_benchmark_command(tmp_path):
    config = {
        "models": [1],
        "m_values": [30],
        "replicates": 3,
        "selectors": ["silverman"],
        "include_guan": False,
        "grf": {"ncols": 16, "nrows": 16, "seed": 1},
        "n_z": 64,
        "h_grid_size": 10,
    }
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    assert dispatch(["benchmark", "--config", str(path), "--seed", "5", "-o", str(out)]) == 0
    table = pd.read_csv(out / "benchmark_table.csv")
    assert set(table["criterion"]) == {"e1", "e2", "e3"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["benchmark"]["seed"] == 5
    assert manifest["config"]["benchmark"]["replicates"] == 3


def test_benchmark_rerun_from_manifest(tmp_path):
    config = {"m_values": [30], "replicates": 3, "selectors": ["rt"], "grf": {"ncols": 16, "nrows": 16}, "n_z": 64}
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(config))
    first, second = tmp_path / "first", tmp_path / "second"
    assert dispatch(["benchmark", "--config", str(path), "--seed", "8", "-o", str(first)]) == 0
    assert dispatch(["benchmark", "--from-manifest", str(first / "manifest.json"), "-o", str(second)]) == 0
    for name in ("benchmark_table.csv", "benchmark_rows.csv", "benchmark.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


class TestPrecedence:
    def test_environment_threads(self, monkeypatch):
        monkeypatch.setenv("COVKERN_THREADS", "3")
        assert build_run_config(build_parser().parse_args(["gstar"])).threads == 3

    def test_flag_beats_environment(self, monkeypatch):
        monkeypatch.setenv("COVKERN_THREADS", "3")
        assert build_run_config(build_parser().parse_args(["gstar", "--threads", "2"])).threads == 2

    def test_invalid_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("COVKERN_THREADS", "0")
        assert dispatch(["gstar", "-o", str(tmp_path)]) == 1

    def test_grf_flags(self):
        rc = build_run_config(build_parser().parse_args(["simulate", "--grid", "48", "--grf-range", "0.2"]))
        assert (rc.grf.ncols, rc.grf.nrows, rc.grf.range_s) == (48, 48, 0.2)

    def test_boot_criterion_flag(self):
        assert build_run_config(build_parser().parse_args(["bandwidth"])).boot_criterion == "exact"
        rc = build_run_config(build_parser().parse_args(["bandwidth", "--boot-criterion", "amise"]))
        assert rc.boot_criterion == "amise"
