"""Ingestion, imputation, report files, and the CLI surface."""

import csv
import json
import math

import numpy as np
import pytest

from conformal_fts import (
    BacktestConfig,
    SynthSpec,
    load_hmd,
    load_wide_csv,
    run_backtest,
    synth_generate,
    to_functional_series,
    write_report,
)
from conformal_fts.cli import main as cli_main
from conformal_fts.data_io import write_wide_csv
from conformal_fts.exceptions import ImputationError, ParseError, SchemaError


PREAMBLE = "Testland, Death rates (period 1x1), Last modified: 01 Jan 2020\n\n"
HEADER = "  Year          Age             Female            Male           Total\n"


def hmd_text(years, rates=None, missing=(), top=110):
    """Minimal HMD-style file: full 0..top ladder per year."""
    out = [PREAMBLE, HEADER]
    for y in years:
        for a in range(top + 1):
            label = f"{a}+" if a == top else str(a)
            r = rates(y, a) if rates else 0.01 * (1 + a / top)
            cell = "." if (y, a) in missing else f"{r:.12g}"
            out.append(f"  {y}   {label}    {cell}   {cell}   {cell}\n")
    return "".join(out)


@pytest.fixture
def hmd_file(tmp_path):
    def write(text):
        p = tmp_path / "rates.txt"
        p.write_text(text)
        return p

    return write


class TestLoadHmd:
    def test_parses_rows_and_open_age(self, hmd_file):
        table = load_hmd(hmd_file(hmd_text([2000, 2001])))
        assert table.years == [2000, 2001]
        assert len(table.rows) == 2 * 111
        top_rows = [r for r in table.rows if r.open_ended]
        assert {r.age for r in top_rows} == {110}

    def test_missing_dot_becomes_none(self, hmd_file):
        table = load_hmd(hmd_file(hmd_text([2000], missing={(2000, 50)})))
        row = next(r for r in table.rows if r.age == 50)
        assert row.female is None and row.total is None

    def test_duplicate_cell_rejected(self, hmd_file):
        text = hmd_text([2000]) + "  2000   3    0.01   0.01   0.01\n"
        with pytest.raises(ParseError):
            load_hmd(hmd_file(text))

    def test_gap_in_ladder_rejected(self, hmd_file):
        lines = [ln for ln in hmd_text([2000]).splitlines(keepends=True)
                 if not ln.startswith("  2000   57 ")]
        with pytest.raises(SchemaError):
            load_hmd(hmd_file("".join(lines)))

    def test_no_header_rejected(self, hmd_file):
        with pytest.raises(SchemaError):
            load_hmd(hmd_file("just some text\nwithout a header\n"))

    def test_malformed_row_names_line(self, hmd_file):
        text = hmd_text([2000]) + "  2001   0    0.01\n"
        with pytest.raises(ParseError) as exc:
            load_hmd(hmd_file(text))
        assert "line" in str(exc.value)


class TestToFunctionalSeries:
    def test_log_transform(self, hmd_file):
        table = load_hmd(hmd_file(hmd_text([2000], rates=lambda y, a: 0.05)))
        s = to_functional_series(table, "female")
        assert s.values[0, 0] == pytest.approx(math.log(0.05))

    def test_top_group_is_mean_of_rates(self, hmd_file):
        # ages 100..110 all equal r -> closing group value ln(r)
        table = load_hmd(hmd_file(hmd_text(
            [2000], rates=lambda y, a: 0.4 if a >= 100 else 0.01)))
        s = to_functional_series(table, "total", top_age=100)
        assert s.grid.ages[-1] == 100.0
        assert s.values[0, -1] == pytest.approx(math.log(0.4))

    def test_imputation_linear_in_log_scale(self, hmd_file):
        # neighbors at ln-rate -4 and -2 -> missing cell imputed to -3
        def rates(y, a):
            return {49: math.exp(-4.0), 51: math.exp(-2.0)}.get(a, 0.01)

        table = load_hmd(hmd_file(hmd_text([2000], rates=rates, missing={(2000, 50)})))
        s = to_functional_series(table, "male")
        assert s.values[0, 50] == pytest.approx(-3.0)

    def test_all_missing_year_rejected(self, hmd_file):
        text = hmd_text([2000], missing={(2000, a) for a in range(111)})
        with pytest.raises(ImputationError):
            to_functional_series(load_hmd(hmd_file(text)))

    def test_grid_is_contiguous_with_top(self, hmd_file):
        s = to_functional_series(load_hmd(hmd_file(hmd_text([2000, 2001, 2002]))))
        assert np.array_equal(s.grid.ages, np.arange(101.0))


class TestWideCsv:
    def test_round_trip(self, tmp_path):
        s = synth_generate(SynthSpec(n_years=8, n_ages=6, k_true=2, seed=3))
        path = tmp_path / "wide.csv"
        write_wide_csv(s, path)
        back = load_wide_csv(path, log_input=True)
        assert np.array_equal(back.years, s.years)
        assert np.allclose(back.values, s.values, atol=1e-9)

    def test_raw_rates_are_logged(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("year,0,1,2\n2000,0.05,0.05,0.05\n2001,0.05,0.05,0.05\n")
        s = load_wide_csv(path)
        assert np.allclose(s.values, math.log(0.05))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("age,0,1\n2000,0.1,0.1\n")
        with pytest.raises(SchemaError):
            load_wide_csv(path)


@pytest.fixture(scope="module")
def report():
    s = synth_generate(SynthSpec(n_years=70, n_ages=10, k_true=2, seed=5))
    cfg = BacktestConfig(method="split", stat_kind="sd", alphas=(0.2, 0.05),
                         k=2, max_horizon=2)
    return run_backtest(s, cfg)


class TestWriteReport:

    def test_files_and_headers(self, report, tmp_path):
        write_report(report, tmp_path)
        expected = {
            "metrics_by_horizon.csv": "method,sex,alpha,stat,h,ecp,cpd,mean_width,mean_interval_score",
            "summary.csv": "metric,alpha,stat,min,q1,median,mean,q3,max",
            "intervals.csv": "origin,target,h,age,point,lb,ub",
            "quantiles_by_age.csv": "age,h,mean_qhat",
        }
        for name, header in expected.items():
            lines = (tmp_path / name).read_text().splitlines()
            assert lines[0] == header
        cfg = json.loads((tmp_path / "config.json").read_text())
        assert cfg["method"] == "split" and cfg["alpha"] == [0.2, 0.05]

    def test_metrics_round_trip(self, report, tmp_path):
        write_report(report, tmp_path)
        with open(tmp_path / "metrics_by_horizon.csv") as fh:
            parsed = list(csv.DictReader(fh))
        assert len(parsed) == len(report.rows)
        for row, rec in zip(parsed, report.rows):
            assert float(row["ecp"]) == pytest.approx(rec.ecp, abs=1e-6)
            assert row["h"] == str(rec.horizon)
            # 6 significant digits round-trip
            assert float(row["mean_interval_score"]) == pytest.approx(
                rec.mean_interval_score, rel=1e-5
            )

    def test_unwritable_directory(self, report, tmp_path):
        target = tmp_path / "not_a_dir"
        target.write_text("occupied")
        with pytest.raises(OSError):
            write_report(report, target)


class TestCli:
    def synth_csv(self, tmp_path, n_years=70):
        path = tmp_path / "series.csv"
        code = cli_main(["synth", "--n-years", str(n_years), "--n-ages", "10",
                         "--k-true", "2", "--seed", "1", "--out", str(path)])
        assert code == 0
        return path

    def test_synth_then_backtest(self, tmp_path):
        path = self.synth_csv(tmp_path)
        out = tmp_path / "report"
        code = cli_main(["backtest", "--input", str(path), "--log-input",
                         "--method", "split", "--stat", "quantile",
                         "--alpha", "0.2", "--alpha", "0.05",
                         "--k", "2", "--max-horizon", "2", "--out", str(out)])
        assert code == 0
        for name in ("metrics_by_horizon.csv", "summary.csv", "intervals.csv",
                     "quantiles_by_age.csv", "config.json"):
            assert (out / name).exists()

    def test_calibrate_prints_summary(self, tmp_path, capsys):
        path = self.synth_csv(tmp_path)
        code = cli_main(["calibrate", "--input", str(path), "--log-input",
                         "--stat", "sd", "--k", "2", "--max-horizon", "2",
                         "--out", str(tmp_path / "cal")])
        assert code == 0
        captured = capsys.readouterr().out
        assert "xi" in captured and "h" in captured

    def test_sequential_subcommand(self, tmp_path):
        path = self.synth_csv(tmp_path)
        code = cli_main(["sequential", "--input", str(path), "--log-input",
                         "--alpha", "0.2", "--k", "2", "--max-horizon", "1",
                         "--out", str(tmp_path / "seq")])
        assert code == 0

    def test_validate_data(self, tmp_path):
        path = self.synth_csv(tmp_path, n_years=10)
        assert cli_main(["validate-data", "--input", str(path), "--log-input"]) == 0

    def test_usage_error_unknown_stat(self, tmp_path):
        path = self.synth_csv(tmp_path, n_years=10)
        code = cli_main(["backtest", "--input", str(path), "--log-input",
                         "--stat", "variance"])
        assert code == 2

    def test_data_error_missing_file(self, tmp_path):
        code = cli_main(["validate-data", "--input", str(tmp_path / "nope.csv")])
        assert code == 3

    def test_usage_error_bad_split(self, tmp_path):
        path = self.synth_csv(tmp_path, n_years=10)
        code = cli_main(["backtest", "--input", str(path), "--log-input",
                         "--split", "1:2:3"])
        assert code == 2

    def test_numeric_error_all_horizons_fail(self, tmp_path):
        # one validation year cannot support an sd scale at any horizon
        path = self.synth_csv(tmp_path, n_years=10)
        code = cli_main(["backtest", "--input", str(path), "--log-input",
                         "--k", "1", "--stat", "sd", "--split", "1:6,7:7,8:10",
                         "--out", str(tmp_path / "r")])
        assert code == 4


class TestSynthGenerate:
    def test_same_seed_bit_identical(self):
        spec = SynthSpec(n_years=15, n_ages=8, k_true=2, seed=9)
        a, b = synth_generate(spec), synth_generate(spec)
        assert np.array_equal(a.values, b.values)

    def test_degenerate_spec_is_constant(self):
        s = synth_generate(SynthSpec(n_years=10, n_ages=6, k_true=1, ar_coefs=(0.0,),
                                     innovation_sds=(0.0,), noise_sd=0.0, seed=0))
        assert np.allclose(s.values, s.values[0])

    def test_evr_detects_k_true(self):
        # low observation noise: the eigenvalue-ratio criterion finds the
        # true order in at least 95 of 100 seeds
        from conformal_fts import fpca

        hits = 0
        for seed in range(100):
            s = synth_generate(SynthSpec(n_years=100, n_ages=30, k_true=2,
                                         noise_sd=5e-4, seed=seed))
            hits += fpca(s, k="evr").k == 2
        assert hits >= 95
