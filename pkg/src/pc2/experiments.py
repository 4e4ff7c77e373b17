"""
Experiment drivers: single training runs, sweeps and moment-field studies.

A sweep is the cartesian product

    method variants x n_V x n_BC x n_init x repeats

Repeat r uses seed config.seed + r for every variant, so all methods see
the same random points within a repeat. Cells may run in parallel; output
rows are sorted before writing.
"""

import itertools
import logging
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from pc2 import __version__
from pc2.basis import BasisSpec, build_design_matrix
from pc2.config import MethodVariant, RunConfig, write_effective_config
from pc2.constraints import ConstraintSet, EmptyConstraintSetError, assemble
from pc2.errors import Pc2Error
from pc2.metrics import MetricReport, boundary_regions, metrics, moment_fields
from pc2.model_io import diagnostics_dict, write_model
from pc2.problems import ProblemDef, RealizationReference, get_problem
from pc2.report_writer import (
    DIAGNOSTICS_COLUMNS,
    ERROR_FIELD_COLUMNS,
    GENERALIZATION_COLUMNS,
    SWEEP_COLUMNS,
    SWEEP_DETAIL_COLUMNS,
    write_csv,
    write_field_csv,
    write_report,
)
from pc2.sampling import SamplePlan, plan_points, sample_random
from pc2.solvers import FitProblem, FitResult, SolverConfig, fit, fit_adaptive

logger = logging.getLogger(__name__)

# Child-stream labels of the run seed.
_EVAL_STREAM = 1
_DATA_STREAM = 2
_VALIDATION_STREAM = 3
_UQ_STREAM = 4

N_VALIDATION = 1000


class ExperimentError(Pc2Error):
    pass


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


# =============================================================================
# Cells
# =============================================================================

@dataclass(frozen=True)
class SweepCell:
    """One training run of a sweep."""
    variant: MethodVariant
    n_V: int
    n_BC: int
    n_init: int
    repeat: int
    seed: int


def generate_cells(config: RunConfig) -> list[SweepCell]:
    """Expand a resolved configuration into sweep cells."""
    cells = []
    for variant, n_V, n_BC, n_init, repeat in itertools.product(
        config.variants, config.n_V, config.n_BC, config.n_init, range(config.repeats)
    ):
        cells.append(SweepCell(variant, n_V, n_BC, n_init, repeat, config.seed + repeat))
    return cells


@dataclass(frozen=True, eq=False)
class TrainOutcome:
    cell: SweepCell
    result: FitResult
    report: MetricReport
    timings: dict[str, float]

    def row(self) -> dict[str, Any]:
        diag = self.result.diagnostics
        return {
            "method": self.cell.variant.label,
            "n_V": self.cell.n_V,
            "n_BC": self.cell.n_BC,
            "n_init": self.cell.n_init,
            "repeat": self.cell.repeat,
            "seed": self.cell.seed,
            "mse": self.report.mse,
            "mae": self.report.mae,
            "max_ae": self.report.max_ae,
            "wall_time_s": self.timings["fit"],
            "fit_time_s": self.timings["fit"],
            "total_time_s": self.timings["total"],
            "chosen_p": diag.chosen_p,
            "overconstrained": diag.overconstrained,
        }


# =============================================================================
# Training
# =============================================================================

def build_fit_problem(
    problem: ProblemDef,
    basis: BasisSpec,
    plan: SamplePlan,
    config: RunConfig,
) -> FitProblem:
    """Sample points, assemble constraints and collect data rows for one fit."""
    points = plan_points(problem, plan, basis)
    try:
        constraints = assemble(problem.constraint_blocks(points), basis, config.normalize_rows)
    except EmptyConstraintSetError:
        constraints = ConstraintSet.empty(basis)

    data_points = [points.init_data]
    targets = [np.zeros(0)]
    if points.init_data.shape[0]:
        targets[0] = problem.initial_data(points.init_data)
    if problem.training_data is not None and config.n_train:
        train_pts, train_vals = problem.training_data(config.n_train, _rng(plan.seed, _DATA_STREAM))
        data_points.append(train_pts)
        targets.append(train_vals)

    design = build_design_matrix(basis, np.vstack(data_points))
    return FitProblem(design=design, targets=np.concatenate(targets), constraints=constraints)


def _validation_problem(problem: ProblemDef, basis: BasisSpec, seed: int) -> FitProblem:
    rng = _rng(seed, _VALIDATION_STREAM)
    plan = SamplePlan(
        n_V=N_VALIDATION,
        n_BC=N_VALIDATION,
        n_IC=N_VALIDATION if problem.is_time_dependent else 0,
        seed=int(rng.integers(2**31)),
    )
    points = plan_points(problem, plan, basis)
    constraints = assemble(problem.constraint_blocks(points), basis)
    val_pts, val_ref = problem.evaluation_set(N_VALIDATION, rng)
    return FitProblem(build_design_matrix(basis, val_pts), val_ref, constraints)


def train_cell(
    problem: ProblemDef,
    config: RunConfig,
    cell: SweepCell,
    evaluation: tuple[np.ndarray, np.ndarray],
) -> TrainOutcome:
    """Fit one cell and evaluate it against the reference."""
    hard_ic = config.ic_mode == "hard"
    n_init = cell.n_init if problem.is_time_dependent else 0
    plan = SamplePlan(
        n_V=cell.n_V,
        n_BC=cell.n_BC,
        n_IC=n_init if hard_ic else 0,
        n_init=0 if hard_ic else n_init,
        strategy=cell.variant.strategy,
        oversample_k=config.oversample_k,
        seed=cell.seed,
        candidate_rows=config.candidate_rows,
    )
    solver_cfg = SolverConfig(
        method=cell.variant.method,
        ridge=config.ridge,
        rank_tol=config.rank_tol,
        adaptivity=config.adaptivity_config,
    )

    start = time.perf_counter()
    if solver_cfg.adaptivity is None:
        basis = BasisSpec.create(problem.input, config.p, config.q)
        fit_problem = build_fit_problem(problem, basis, plan, config)
        assembled = time.perf_counter()
        result = fit(fit_problem, solver_cfg)
    else:
        def build(p: int) -> FitProblem:
            basis = BasisSpec.create(problem.input, p, config.q)
            base = build_fit_problem(problem, basis, plan, config)
            return FitProblem(
                base.design, base.targets, base.constraints,
                _validation_problem(problem, basis, cell.seed),
            )

        assembled = time.perf_counter()
        result = fit_adaptive(build, solver_cfg)
    fitted = time.perf_counter()

    eval_pts, eval_ref = evaluation
    report = metrics(
        result.model.predict(eval_pts), eval_ref, boundary_regions(problem.input, eval_pts)
    )
    done = time.perf_counter()

    timings = {
        "assemble": assembled - start,
        "fit": fitted - assembled,
        "evaluate": done - fitted,
        "total": done - start,
    }
    if not config.timing_enabled:
        timings = {k: 0.0 for k in timings}
    logger.info(
        "%s n_V=%d repeat=%d: test MSE %.3e", cell.variant.label, cell.n_V, cell.repeat, report.mse
    )
    return TrainOutcome(cell=cell, result=result, report=report, timings=timings)


def evaluation_data(problem: ProblemDef, config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    return problem.evaluation_set(config.n_eval, _rng(config.seed, _EVAL_STREAM), config.n_eval_realizations)


def write_provenance(out_dir: str | Path) -> Path:
    """Package version plus git describe when available."""
    lines = [f"pc2 {__version__}"]
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, check=True, timeout=10,
        ).stdout.strip()
        if described:
            lines.append(f"git {described}")
    except (OSError, subprocess.SubprocessError):
        pass
    path = Path(out_dir) / "provenance.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def _prepare(config: RunConfig, out_dir: str | Path) -> tuple[RunConfig, ProblemDef, Path]:
    resolved = config.resolve()
    problem = get_problem(resolved.problem, **resolved.problem_options)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(resolved, out)
    write_provenance(out)
    return resolved, problem, out


def run_train(config: RunConfig, out_dir: str | Path) -> TrainOutcome:
    """
    Train one model and write model.bin, diagnostics.csv and report.xlsx.

    Only the first method and first count of each list are used.
    """
    resolved, problem, out = _prepare(config, out_dir)
    if len(resolved.method) > 1 or max(len(resolved.n_V), len(resolved.n_BC), len(resolved.n_init)) > 1:
        logger.warning("train uses the first method and count of each list; use sweep for the rest")
    cell = generate_cells(resolved)[0]
    outcome = train_cell(problem, resolved, cell, evaluation_data(problem, resolved))

    diag = outcome.result.diagnostics
    write_model(
        outcome.result.model,
        out / "model.bin",
        diagnostics_dict(diag, timing=resolved.timing_enabled),
    )
    fit_errors = {
        "data_mse": diag.data_mse,
        "pde_mse": diag.pde_residual_mse,
        "bc_mse": diag.bc_residual_mse + diag.ic_residual_mse,
        "chosen_p": diag.chosen_p,
    }
    test_errors = {**fit_errors, "data_mse": outcome.report.mse}
    rows = [
        {"stage": "assemble", "wall_time_s": outcome.timings["assemble"], **fit_errors},
        {"stage": "fit", "wall_time_s": outcome.timings["fit"], **fit_errors},
        {"stage": "evaluate", "wall_time_s": outcome.timings["evaluate"], **test_errors},
        {"stage": "total", "wall_time_s": outcome.timings["total"], **test_errors},
    ]
    write_csv(out / "diagnostics.csv", DIAGNOSTICS_COLUMNS, rows)
    write_report([outcome.row()], resolved.to_dict(), out / "report.xlsx")
    return outcome


def run_sweep(config: RunConfig, out_dir: str | Path, threads: int = 1) -> list[dict[str, Any]]:
    """Train every sweep cell and write sweep.csv, sweep_detail.csv and report.xlsx."""
    resolved, problem, out = _prepare(config, out_dir)
    cells = generate_cells(resolved)
    evaluation = evaluation_data(problem, resolved)
    logger.info("Sweep of %d cells on %s with %d threads", len(cells), problem.name, threads)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda c: train_cell(problem, resolved, c, evaluation), cells))
    else:
        outcomes = [train_cell(problem, resolved, c, evaluation) for c in cells]

    order = {v.label: i for i, v in enumerate(resolved.variants)}
    rows = sorted(
        (o.row() for o in outcomes),
        key=lambda r: (order[r["method"]], r["n_V"], r["n_BC"], r["n_init"], r["repeat"]),
    )
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    write_csv(out / "sweep_detail.csv", SWEEP_DETAIL_COLUMNS, rows)
    write_report(rows, resolved.to_dict(), out / "report.xlsx")
    return rows


# =============================================================================
# Moment fields
# =============================================================================

def parse_grid(specs: list[str], names: list[str]) -> np.ndarray:
    """
    Cartesian grid over the deterministic dimensions.

    Each spec is "name=lo:hi:n" or "name=value"; every name needs one spec.
    """
    axes: dict[str, np.ndarray] = {}
    for spec in specs:
        name, _, text = spec.partition("=")
        name = name.strip()
        if not text:
            raise ExperimentError(f"Grid spec {spec!r} must look like name=lo:hi:n or name=value")
        try:
            parts = [float(v) for v in text.split(":")]
        except ValueError:
            raise ExperimentError(f"Grid spec {spec!r} has a non-numeric value") from None
        if len(parts) == 1:
            axes[name] = np.array(parts)
        elif len(parts) == 3 and parts[2] >= 1 and parts[2] == int(parts[2]):
            axes[name] = np.linspace(parts[0], parts[1], int(parts[2]))
        else:
            raise ExperimentError(f"Grid spec {spec!r} must look like name=lo:hi:n or name=value")
    missing = [n for n in names if n not in axes]
    extra = [n for n in axes if n not in names]
    if missing or extra:
        raise ExperimentError(f"Grid needs exactly the dimensions {names}; missing {missing}, unexpected {extra}")
    mesh = np.meshgrid(*(axes[n] for n in names), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh]) if names else np.zeros((1, 0))


def reference_moments(
    problem: ProblemDef,
    det_points: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of the reference over sampled random inputs."""
    spec = problem.input
    det_dims, rand_dims = spec.deterministic_dims, spec.random_dims
    draws = sample_random(spec, n_samples, rng)[:, rand_dims]
    values = np.empty((n_samples, det_points.shape[0]))
    for k in range(n_samples):
        pts = np.empty((det_points.shape[0], spec.dim))
        pts[:, det_dims] = det_points
        pts[:, rand_dims] = draws[k]
        values[k] = problem.reference.evaluate(pts)
    return values.mean(axis=0), values.std(axis=0, ddof=1)


def generalization_study(
    model,
    problem: ProblemDef,
    n_fields: int,
    rng: np.random.Generator,
    grid_n: int = 11,
) -> list[dict[str, Any]]:
    """
    Test MSE on a uniform space-time grid for fresh realizations, ascending.
    """
    spec = problem.input
    det_dims = spec.deterministic_dims
    axes = [np.linspace(*spec.marginals[i].params, grid_n) for i in det_dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.column_stack([m.ravel() for m in mesh])
    rand_dims = list(problem.reference.realization_dims)
    realizations = sample_random(spec, n_fields, rng)[:, rand_dims]

    results = []
    for k, realization in enumerate(realizations):
        pts = np.empty((grid.shape[0], spec.dim))
        pts[:, det_dims] = grid
        pts[:, rand_dims] = realization
        report = metrics(model.predict(pts), problem.reference.evaluate(pts))
        results.append((report.mse, k))
    results.sort()
    return [{"rank": r, "field": k, "mse": mse} for r, (mse, k) in enumerate(results)]


def run_uq(
    model,
    problem: ProblemDef,
    grid_specs: list[str],
    out_dir: str | Path,
    seed: int = 0,
    n_reference: int = 32,
    n_fields: int = 0,
) -> dict[str, Path]:
    """
    Write mean_field.csv and std_field.csv, plus error_vs_reference.csv.

    n_fields > 0 adds generalization.csv for problems with numerical
    per-realization references.
    """
    if model.input.names != problem.input.names:
        raise ExperimentError(
            f"Model dimensions {model.input.names} do not match problem {problem.name!r} {problem.input.names}"
        )
    spec = model.input
    names = [spec.names[i] for i in spec.deterministic_dims]
    det_points = parse_grid(grid_specs, names)
    fields = moment_fields(model, det_points)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written = {
        "mean": write_field_csv(out / "mean_field.csv", names, fields.points, fields.mean),
        "std": write_field_csv(out / "std_field.csv", names, fields.points, fields.std),
    }

    rng = _rng(seed, _UQ_STREAM)
    if spec.random_dims:
        ref_mean, ref_std = reference_moments(problem, fields.points, n_reference, rng)
    else:
        full = fields.points
        ref_mean, ref_std = problem.reference.evaluate(full), np.zeros(full.shape[0])
    rows = []
    for i, point in enumerate(fields.points):
        row = {name: point[j] for j, name in enumerate(names)}
        row.update({
            "mean_pce": fields.mean[i],
            "mean_ref": ref_mean[i],
            "mean_abs_error": abs(fields.mean[i] - ref_mean[i]),
            "std_pce": fields.std[i],
            "std_ref": ref_std[i],
            "std_abs_error": abs(fields.std[i] - ref_std[i]),
        })
        rows.append(row)
    written["error"] = write_csv(out / "error_vs_reference.csv", [*names, *ERROR_FIELD_COLUMNS], rows)

    if n_fields > 0 and isinstance(problem.reference, RealizationReference):
        study = generalization_study(model, problem, n_fields, rng)
        written["generalization"] = write_csv(out / "generalization.csv", GENERALIZATION_COLUMNS, study)
    return written
