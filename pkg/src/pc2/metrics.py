"""
Error metrics and moment extraction.

Errors against a reference:
    AE  = |y_pce - y_ref|
    RAE = |y_pce - y_ref| / |y_ref|     (entries with |y_ref| < 1e-12 are excluded)
    MSE = mean(AE^2)

Moment fields collapse the expansion over its random dimensions at fixed
deterministic coordinates. Random-dimension factors are orthonormal with
zero mean (except the constant), so with coefficients grouped by their
random multi-index r:

    mean     = sum_{alpha: r(alpha) = 0} beta_alpha Psi_alpha,det
    variance = sum_{r != 0} ( sum_{alpha: r(alpha) = r} beta_alpha Psi_alpha,det )^2
"""

from dataclasses import dataclass, field

import numpy as np

from pc2.basis import BasisSpec, InputSpec, as_points, germ_map, univariate_table
from pc2.errors import Pc2Error
from pc2.solvers import Pc2Model

RAE_FLOOR = 1e-12


class MetricsError(Pc2Error):
    pass


@dataclass
class MetricReport:
    mse: float
    mae: float
    max_ae: float
    rae_mean: float
    rae_max: float
    n_points: int
    n_rae_excluded: int
    regions: dict[str, "MetricReport"] = field(default_factory=dict)


def metrics(y_pce, y_ref, regions: dict[str, np.ndarray] | None = None) -> MetricReport:
    """
    Compare surrogate predictions with reference values.

    Args:
        y_pce: Surrogate values
        y_ref: Reference values
        regions: Optional boolean masks (e.g. interior / boundary) for a breakdown
    """
    y_pce = np.asarray(y_pce, dtype=float).reshape(-1)
    y_ref = np.asarray(y_ref, dtype=float).reshape(-1)
    if y_pce.shape != y_ref.shape:
        raise MetricsError(f"Length mismatch: {y_pce.size} predictions, {y_ref.size} references")
    if y_pce.size == 0:
        raise MetricsError("Cannot compute metrics of empty vectors")

    ae = np.abs(y_pce - y_ref)
    usable = np.abs(y_ref) >= RAE_FLOOR
    rae = ae[usable] / np.abs(y_ref[usable])
    report = MetricReport(
        mse=float(np.mean(ae**2)),
        mae=float(np.mean(ae)),
        max_ae=float(np.max(ae)),
        rae_mean=float(np.mean(rae)) if rae.size else float("nan"),
        rae_max=float(np.max(rae)) if rae.size else float("nan"),
        n_points=int(ae.size),
        n_rae_excluded=int(np.count_nonzero(~usable)),
    )
    for name, mask in (regions or {}).items():
        mask = np.asarray(mask, dtype=bool)
        if np.any(mask):
            report.regions[name] = metrics(y_pce[mask], y_ref[mask])
    return report


def boundary_regions(spec: InputSpec, points, width: float = 0.02) -> dict[str, np.ndarray]:
    """Interior / boundary masks: boundary means within width * span of a deterministic interval end."""
    pts = as_points(points, spec.dim)
    near = np.zeros(pts.shape[0], dtype=bool)
    for i in spec.deterministic_dims:
        lo, hi = spec.marginals[i].params
        band = width * (hi - lo)
        near |= (pts[:, i] - lo < band) | (hi - pts[:, i] < band)
    return {"interior": ~near, "boundary": near}


# =============================================================================
# Moments
# =============================================================================

@dataclass(frozen=True, eq=False)
class MomentFields:
    """Mean and standard deviation at deterministic-coordinate points."""
    points: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def _partial_design(basis: BasisSpec, points: np.ndarray, dims: list[int]) -> np.ndarray:
    """Products of the univariate factors over a subset of dimensions."""
    values = np.ones((points.shape[0], basis.cardinality))
    for col, i in enumerate(dims):
        marginal = basis.input.marginals[i]
        degrees = basis.indices.array[:, i]
        if degrees.max() == 0:
            continue
        xi, _ = germ_map(marginal, points[:, col])
        values *= univariate_table(marginal.family, int(degrees.max()), xi)[:, degrees]
    return values


def _deterministic_points(model: Pc2Model, det_points) -> tuple[np.ndarray, list[int]]:
    det_dims = model.input.deterministic_dims
    if not det_dims:
        return np.zeros((1, 0)), det_dims
    return as_points(det_points, len(det_dims)), det_dims


def moment_fields(model: Pc2Model, det_points) -> MomentFields:
    """
    Closed-form mean and standard deviation over the random dimensions.

    Args:
        model: Fitted surrogate
        det_points: Coordinates of the deterministic dimensions, in input order,
            shape (n, n_deterministic)
    """
    pts, det_dims = _deterministic_points(model, det_points)
    basis = model.basis
    contributions = _partial_design(basis, pts, det_dims) * model.beta

    rand_dims = model.input.random_dims
    if not rand_dims:
        mean = contributions.sum(axis=1)
        return MomentFields(points=pts, mean=mean, std=np.zeros_like(mean))

    random_part = basis.indices.array[:, rand_dims]
    groups, inverse = np.unique(random_part, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    grouped = np.zeros((pts.shape[0], groups.shape[0]))
    np.add.at(grouped.T, inverse, contributions.T)

    constant = np.flatnonzero(~groups.any(axis=1))
    mean = grouped[:, constant].sum(axis=1)
    others = np.ones(groups.shape[0], dtype=bool)
    others[constant] = False
    variance = np.sum(grouped[:, others] ** 2, axis=1)
    return MomentFields(points=pts, mean=mean, std=np.sqrt(variance))


def monte_carlo_moments(
    model: Pc2Model,
    det_points,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 10_000,
) -> MomentFields:
    """
    Sample mean and standard deviation of the surrogate over its random inputs.

    The same random draws serve every deterministic point.
    """
    if n_samples < 2:
        raise MetricsError(f"Need at least 2 Monte Carlo samples, got {n_samples}")
    pts, det_dims = _deterministic_points(model, det_points)
    basis = model.basis
    rand_dims = model.input.random_dims
    weights = (_partial_design(basis, pts, det_dims) * model.beta).T  # (K, n_points)
    if not rand_dims:
        mean = weights.sum(axis=0)
        return MomentFields(points=pts, mean=mean, std=np.zeros_like(mean))

    total = np.zeros(pts.shape[0])
    total_sq = np.zeros(pts.shape[0])
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        draws = np.column_stack([model.input.marginals[i].sample(rng, m) for i in rand_dims])
        values = _partial_design(basis, draws, rand_dims) @ weights
        total += values.sum(axis=0)
        total_sq += (values**2).sum(axis=0)
        done += m

    mean = total / n_samples
    variance = (total_sq - n_samples * mean**2) / (n_samples - 1)
    return MomentFields(points=pts, mean=mean, std=np.sqrt(np.clip(variance, 0.0, None)))
