import json
from pathlib import Path

import pandas as pd
import pytest
from pydantic import ValidationError

from modules.benchmark import BenchmarkConfig, BenchmarkResult, benchmark_table, run_benchmark, write_benchmark
from modules.run_manager import load_benchmark_config
from modules.simulation import GRFSpec


def small_config(**overrides) -> BenchmarkConfig:
    settings = dict(
        models=[1],
        m_values=[50],
        replicates=10,
        selectors=["silverman", "rt", "cv"],
        grf=GRFSpec(ncols=32, nrows=32, seed=3),
        n_z=129,
        h_grid_size=20,
        seed=17,
    )
    settings.update(overrides)
    return BenchmarkConfig(**settings)


@pytest.fixture(scope="module")
def result():
    return run_benchmark(small_config())


class TestBenchmarkConfig:
    def test_defaults(self):
        config = BenchmarkConfig()
        assert config.selectors == ["silverman", "rt", "boot", "cv"]
        assert config.replicates == 100

    def test_unknown_selector(self):
        with pytest.raises(ValidationError, match="unknown selectors"):
            BenchmarkConfig(selectors=["rt", "plugin"])

    def test_h_grid_order(self):
        with pytest.raises(ValidationError):
            BenchmarkConfig(h_grid_lo=0.5, h_grid_hi=0.1)

    def test_m_values(self):
        with pytest.raises(ValidationError):
            BenchmarkConfig(m_values=[])
        with pytest.raises(ValidationError):
            BenchmarkConfig(m_values=[50, -1])


class TestRunBenchmark:
    def test_rows(self, result):
        selectors = {(r.estimator, r.selector) for r in result.rows}
        assert selectors == {
            ("weighted", "mise"),
            ("weighted", "silverman"),
            ("weighted", "rt"),
            ("weighted", "cv"),
            ("guan", "mise"),
            ("guan", "cv"),
        }

    def test_reference_row_has_no_bandwidth_bias(self, result):
        row = result.row(1, 50, "weighted", "mise")
        assert row.e3 == 0.0
        assert row.h_mean == pytest.approx(row.h_reference)

    def test_errors_are_non_negative(self, result):
        for row in result.rows:
            if row.e1 is not None:
                assert row.e1 >= 0
                assert row.e2 >= 0
                assert row.e1_se == pytest.approx(row.e2 / (row.replicates - row.failures) ** 0.5)

    def test_scenario_summary(self, result):
        summary = result.scenarios[0]
        assert summary.h_mise > 0
        assert summary.mean_events == pytest.approx(50.0, abs=15.0)
        assert summary.failed_replicates == 0

    def test_missing_row(self, result):
        with pytest.raises(KeyError):
            result.row(2, 50, "weighted", "mise")

    def test_thread_count_does_not_change_results(self, result):
        threaded = run_benchmark(small_config(threads=3))
        assert [r.model_dump() for r in threaded.rows] == [r.model_dump() for r in result.rows]

    def test_without_guan(self):
        rows = run_benchmark(small_config(include_guan=False, replicates=3, selectors=["silverman"])).rows
        assert {r.estimator for r in rows} == {"weighted"}


class TestEgress:
    def test_table_layout(self, result):
        table = benchmark_table(result)
        assert list(table.columns[:3]) == ["model", "m", "criterion"]
        assert "weighted:mise" in table.columns
        assert "guan:cv" in table.columns
        assert sorted(table["criterion"]) == ["e1", "e2", "e3"]

    def test_write(self, result, tmp_path):
        paths = write_benchmark(result, tmp_path / "out")
        assert all(p.exists() for p in paths.values())
        rows = pd.read_csv(paths["rows"])
        assert len(rows) == len(result.rows)
        back = BenchmarkResult.model_validate(json.loads(paths["json"].read_text()))
        assert back.row(1, 50, "weighted", "mise").h_reference == result.row(1, 50, "weighted", "mise").h_reference


@pytest.mark.slow
class TestDeskBenchmark:
    @pytest.fixture(scope="class")
    def desk(self):
        return run_benchmark(load_benchmark_config(Path(__file__).parent.parent / "configs" / "desk_benchmark.json"))

    @pytest.mark.parametrize("m", [50, 100])
    def test_selector_ordering(self, desk, m):
        e1 = {s: desk.row(1, m, "weighted", s).e1 for s in ("boot", "rt", "silverman", "cv")}
        assert e1["boot"] < e1["rt"] < e1["silverman"] < e1["cv"]

    def test_bootstrap_error_level(self, desk):
        assert 0.04 <= desk.row(1, 50, "weighted", "boot").e1 <= 0.10

    def test_signed_log_ratios(self, desk):
        e3 = {s: desk.row(1, 50, "weighted", s).e3 for s in ("silverman", "rt", "boot")}
        assert e3["silverman"] < -0.4
        assert e3["rt"] < -0.3
        assert -0.2 < e3["boot"] < 0.3

    def test_guan_cv_trails_bootstrap(self, desk):
        assert desk.row(1, 100, "guan", "cv").e1 >= 2 * desk.row(1, 100, "weighted", "boot").e1
