"""Tests for CSV artifacts and the Excel report."""

import csv

import numpy as np
import pytest
from openpyxl import load_workbook
from pc2.report_writer import (
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    SWEEP_DETAIL_COLUMNS,
    ReportWriter,
    ReportWriterConfig,
    summarize,
    write_csv,
    write_field_csv,
    write_report,
)


def run_row(method, mse, repeat=0, n_V=100):
    return {
        "method": method, "n_V": n_V, "n_BC": 40, "n_init": 0, "repeat": repeat, "seed": 7 + repeat,
        "mse": mse, "mae": mse, "max_ae": mse, "fit_time_s": 0.5, "total_time_s": 1.0,
        "wall_time_s": 0.5, "chosen_p": 6, "overconstrained": True,
    }


@pytest.fixture
def rows():
    return [run_row("KKT", 1e-6), run_row("KKT", 3e-6, repeat=1), run_row("SULM", 2e-6)]


class TestCsv:
    def test_header_and_order(self, rows, tmp_path):
        path = write_csv(tmp_path / "sweep.csv", SWEEP_COLUMNS, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "method,n_V,repeat,seed,mse,wall_time_s"
        assert lines[1] == "KKT,100,0,7,1e-06,0.5"

    def test_float_repr_round_trips(self, tmp_path):
        value = 0.1 + 0.2
        path = write_csv(tmp_path / "x.csv", ["v"], [{"v": np.float64(value)}])
        with path.open() as handle:
            assert float(list(csv.DictReader(handle))[0]["v"]) == value

    def test_booleans(self, rows, tmp_path):
        path = write_csv(tmp_path / "detail.csv", SWEEP_DETAIL_COLUMNS, rows)
        assert path.read_text().splitlines()[1].endswith(",6,1")

    def test_missing_column(self, tmp_path):
        with pytest.raises(KeyError):
            write_csv(tmp_path / "x.csv", ["a", "b"], [{"a": 1}])

    def test_field_csv(self, tmp_path):
        path = write_field_csv(tmp_path / "mean_field.csv", ["x", "t"], np.array([[0.0, 1.0], [0.5, 1.0]]), [2.0, 3.0])
        assert path.read_text().splitlines() == ["x,t,value", "0.0,1.0,2.0", "0.5,1.0,3.0"]


class TestSummary:
    def test_groups(self, rows):
        summary = summarize(rows)
        assert [s["method"] for s in summary] == ["KKT", "SULM"]
        assert summary[0]["runs"] == 2
        assert summary[0]["mse_mean"] == pytest.approx(2e-6)
        assert summary[0]["mse_std"] == pytest.approx(np.sqrt(2) * 1e-6)
        assert summary[1]["mse_std"] == 0.0


class TestWorkbook:
    def test_sheets(self, rows, tmp_path):
        path = write_report(rows, {"problem": "toy_beam", "n_V": [100]}, tmp_path / "report.xlsx")
        wb = load_workbook(path)
        assert wb.sheetnames == ["Runs", "Summary", "Config"]
        runs = wb["Runs"]
        assert [c.value for c in runs[1]] == SWEEP_DETAIL_COLUMNS
        assert runs.max_row == 4
        assert runs.cell(row=2, column=7).number_format == "0.000E+00"
        assert [c.value for c in wb["Summary"][1]] == SUMMARY_COLUMNS
        config = {row[0].value: row[1].value for row in wb["Config"].iter_rows(min_row=2)}
        assert config == {"n_V": "[100]", "problem": "toy_beam"}

    def test_custom_format(self, rows, tmp_path):
        writer = ReportWriter(ReportWriterConfig(number_format="0.00", column_width=10))
        wb = load_workbook(writer.write(rows, {}, tmp_path / "r.xlsx"))
        assert wb["Runs"].cell(row=2, column=7).number_format == "0.00"
        assert wb["Runs"].column_dimensions["A"].width == 10
