"""
CSV artifacts and the Excel experiment report.

CSV schemas (header row first, fixed column order):

    diagnostics.csv         stage, wall_time_s, data_mse, pde_mse, bc_mse, chosen_p
    sweep.csv               method, n_V, repeat, seed, mse, wall_time_s
    sweep_detail.csv        method, n_V, n_BC, n_init, repeat, seed, mse, mae, max_ae,
                            fit_time_s, total_time_s, chosen_p, overconstrained
    mean_field.csv          <deterministic dims...>, value
    std_field.csv           <deterministic dims...>, value
    error_vs_reference.csv  <deterministic dims...>, mean_pce, mean_ref, mean_abs_error,
                            std_pce, std_ref, std_abs_error
    generalization.csv      rank, field, mse

report.xlsx holds a Runs sheet, a Summary sheet (mean and standard
deviation of MSE per method and counts) and the effective configuration.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

DIAGNOSTICS_COLUMNS = ["stage", "wall_time_s", "data_mse", "pde_mse", "bc_mse", "chosen_p"]
SWEEP_COLUMNS = ["method", "n_V", "repeat", "seed", "mse", "wall_time_s"]
SWEEP_DETAIL_COLUMNS = [
    "method", "n_V", "n_BC", "n_init", "repeat", "seed", "mse", "mae", "max_ae",
    "fit_time_s", "total_time_s", "chosen_p", "overconstrained",
]
ERROR_FIELD_COLUMNS = [
    "mean_pce", "mean_ref", "mean_abs_error", "std_pce", "std_ref", "std_abs_error",
]
GENERALIZATION_COLUMNS = ["rank", "field", "mse"]
SUMMARY_COLUMNS = ["method", "n_V", "n_BC", "n_init", "runs", "mse_mean", "mse_std", "fit_time_mean_s"]


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(file_path: str | Path, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> Path:
    """Write rows (dicts keyed by column) with a fixed column order."""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])
    return path


def write_field_csv(file_path: str | Path, dim_names: Sequence[str], points: np.ndarray, values: np.ndarray) -> Path:
    """Write one scalar field over deterministic-coordinate points."""
    rows = (
        {**{name: point[i] for i, name in enumerate(dim_names)}, "value": value}
        for point, value in zip(points, values)
    )
    return write_csv(file_path, [*dim_names, "value"], rows)


def summarize(rows: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    """Mean and standard deviation of MSE per (method, n_V, n_BC, n_init)."""
    groups: dict[tuple, list[dict[str, Any]]] = {}
    for row in rows:
        key = (row["method"], row["n_V"], row["n_BC"], row["n_init"])
        groups.setdefault(key, []).append(row)
    summary = []
    for key in sorted(groups):
        mses = np.array([r["mse"] for r in groups[key]], dtype=float)
        times = np.array([r["fit_time_s"] for r in groups[key]], dtype=float)
        summary.append({
            "method": key[0],
            "n_V": key[1],
            "n_BC": key[2],
            "n_init": key[3],
            "runs": len(mses),
            "mse_mean": float(mses.mean()),
            "mse_std": float(mses.std(ddof=1)) if mses.size > 1 else 0.0,
            "fit_time_mean_s": float(times.mean()),
        })
    return summary


@dataclass
class ReportWriterConfig:
    """Formatting of the Excel report."""
    header_font: Font = field(default_factory=lambda: Font(bold=True))
    header_fill: PatternFill = field(
        default_factory=lambda: PatternFill(start_color="CCE5FF", end_color="CCE5FF", fill_type="solid")
    )
    number_format: str = "0.000E+00"
    column_width: int = 16


class ReportWriter:
    """Writer for the experiment workbook."""

    def __init__(self, config: ReportWriterConfig | None = None):
        self.config = config or ReportWriterConfig()

    def write(
        self,
        runs: Sequence[dict[str, Any]],
        run_config: dict[str, Any],
        file_path: str | Path,
    ) -> Path:
        wb = Workbook()
        ws = wb.active
        ws.title = "Runs"
        self._write_table(ws, SWEEP_DETAIL_COLUMNS, runs)

        summary = wb.create_sheet("Summary")
        self._write_table(summary, SUMMARY_COLUMNS, summarize(runs))

        cfg = wb.create_sheet("Config")
        self._write_table(
            cfg,
            ["key", "value"],
            [{"key": k, "value": _format_config_value(v)} for k, v in sorted(run_config.items())],
        )

        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        wb.save(path)
        return path

    def _write_table(self, ws, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
        for col, name in enumerate(columns, start=1):
            cell = ws.cell(row=1, column=col, value=name)
            cell.font = self.config.header_font
            cell.fill = self.config.header_fill
            cell.alignment = Alignment(horizontal="center")
            ws.column_dimensions[get_column_letter(col)].width = self.config.column_width

        for r, row in enumerate(rows, start=2):
            for col, name in enumerate(columns, start=1):
                value = row[name]
                if isinstance(value, np.generic):
                    value = value.item()
                cell = ws.cell(row=r, column=col, value=value)
                if isinstance(value, float):
                    cell.number_format = self.config.number_format
        ws.freeze_panes = "A2"


def _format_config_value(value: Any) -> Any:
    if isinstance(value, (list, tuple, dict)) or value is None:
        return str(value)
    return value


def write_report(
    runs: Sequence[dict[str, Any]],
    run_config: dict[str, Any],
    file_path: str | Path,
) -> Path:
    """Write the experiment workbook."""
    return ReportWriter().write(runs, run_config, file_path)
