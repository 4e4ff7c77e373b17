"""
Coefficient estimation for polynomial chaos surrogates.

Three estimators share one interface:

    OLS   min ||Y - Psi beta||^2
    KKT   the same objective under A beta = c, solved as the blocked system

              [ G   A^T ] [ beta   ]   [ Psi^T Y ]
              [ A   0   ] [ lambda ] = [ c       ],   G = Psi^T Psi + gamma I

    SULM  block elimination of the KKT system: an unconstrained solve, the
          updating operator J = -G^{-1} A^T, the reduced constraint matrix
          Y_c = A J, the residual r = c - A beta~, the multiplier solve
          Y_c lambda = r and the update beta = beta~ + J lambda

Singular or inconsistent systems (more constraints than coefficients) are
resolved by minimum-norm least squares rather than failing.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
import scipy.linalg

from pc2.basis import BasisSpec, DesignMatrix, build_design_matrix
from pc2.constraints import ConstraintSet, ConstraintTag
from pc2.errors import Pc2Error

logger = logging.getLogger(__name__)


class SolverError(Pc2Error):
    """Raised for inconsistent solver inputs or failed factorizations."""
    pass


class SolverMethod(Enum):
    OLS = "OLS"
    KKT = "KKT"
    SULM = "SULM"


# =============================================================================
# Configuration and results
# =============================================================================

@dataclass(frozen=True)
class AdaptivityConfig:
    """p-adaptivity bounds and the data / PDE / BC error thresholds."""
    p_min: int
    p_max: int
    eps_data: float = float("inf")
    eps_pde: float = float("inf")
    eps_bc: float = float("inf")

    def __post_init__(self):
        if self.p_min < 0 or self.p_min > self.p_max:
            raise SolverError(f"Need 0 <= p_min <= p_max, got {self.p_min}..{self.p_max}")
        if min(self.eps_data, self.eps_pde, self.eps_bc) < 0:
            raise SolverError("Adaptivity thresholds must be >= 0")


@dataclass(frozen=True)
class SolverConfig:
    """
    Solver settings.

    ridge=None selects the Gram regularization automatically: 0 when the
    data matrix has full column rank, else 1e-12 times the mean Gram
    diagonal (1.0 when there are no data rows).
    """
    method: SolverMethod = SolverMethod.KKT
    ridge: float | None = None
    rank_tol: float = 1e-12
    adaptivity: AdaptivityConfig | None = None

    def __post_init__(self):
        if not isinstance(self.method, SolverMethod):
            try:
                object.__setattr__(self, "method", SolverMethod(str(self.method).upper()))
            except ValueError:
                raise SolverError(f"Unknown solver method: {self.method!r}") from None
        if self.ridge is not None and self.ridge < 0:
            raise SolverError(f"ridge must be >= 0, got {self.ridge}")
        if self.rank_tol < 0:
            raise SolverError(f"rank_tol must be >= 0, got {self.rank_tol}")


@dataclass(frozen=True, eq=False)
class Pc2Model:
    """Fitted expansion: coefficients on a basis."""
    basis: BasisSpec
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.size != self.basis.cardinality:
            raise SolverError(
                f"{beta.size} coefficients for a basis of cardinality {self.basis.cardinality}"
            )
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def input(self):
        return self.basis.input

    def predict(self, points) -> np.ndarray:
        return build_design_matrix(self.basis, points).values @ self.beta

    def predict_derivative(self, points, deriv: tuple[int, ...]) -> np.ndarray:
        return build_design_matrix(self.basis, points, deriv).values @ self.beta


def predict(model: Pc2Model, points) -> np.ndarray:
    """Evaluate the expansion at physical points."""
    return model.predict(points)


def predict_derivative(model: Pc2Model, points, deriv: tuple[int, ...]) -> np.ndarray:
    """Evaluate a physical-coordinate derivative of the expansion."""
    return model.predict_derivative(points, deriv)


@dataclass
class FitDiagnostics:
    """Errors recomputed from the returned coefficients, plus solver facts."""
    data_mse: float = 0.0
    pde_residual_mse: float = 0.0
    bc_residual_mse: float = 0.0
    ic_residual_mse: float = 0.0
    chosen_p: int = 0
    ridge: float = 0.0
    constraint_rank: int = 0
    overconstrained: bool = False
    converged: bool = True
    wall_time: dict[str, float] = field(default_factory=dict)

    @property
    def total_error(self) -> float:
        return self.data_mse + self.pde_residual_mse + self.bc_residual_mse


@dataclass(frozen=True, eq=False)
class FitResult:
    model: Pc2Model
    multipliers: np.ndarray
    diagnostics: FitDiagnostics


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Everything one fit consumes; validation data is used by p-adaptivity."""
    design: DesignMatrix
    targets: np.ndarray
    constraints: ConstraintSet
    validation: "FitProblem | None" = None


# =============================================================================
# Shared helpers
# =============================================================================

def _mse(values: np.ndarray) -> float:
    return float(np.mean(values**2)) if values.size else 0.0


def _kept(s: np.ndarray, rank_tol: float) -> np.ndarray:
    """Singular values above rank_tol relative to the largest."""
    if not s.size or s[0] <= 0:
        return np.zeros(s.size, dtype=bool)
    return s > rank_tol * s[0]


def residual_diagnostics(
    beta: np.ndarray,
    design: DesignMatrix,
    targets: np.ndarray,
    constraints: ConstraintSet,
) -> FitDiagnostics:
    """Data MSE and per-tag constraint residual MSEs of a coefficient vector."""
    diag = FitDiagnostics(data_mse=_mse(design.values @ beta - targets))
    if not constraints.is_empty:
        res = constraints.residual(beta)
        diag.pde_residual_mse = _mse(res[constraints.mask(ConstraintTag.PDE)])
        diag.bc_residual_mse = _mse(res[constraints.mask(ConstraintTag.BC)])
        diag.ic_residual_mse = _mse(res[constraints.mask(ConstraintTag.IC)])
    return diag


def _check_inputs(design: DesignMatrix, targets, constraints: ConstraintSet | None) -> np.ndarray:
    Y = np.asarray(targets, dtype=float).reshape(-1)
    if Y.size != design.n_rows:
        raise SolverError(f"{Y.size} targets for {design.n_rows} data rows")
    if constraints is not None and constraints.A.shape[1] != design.basis.cardinality:
        raise SolverError(
            f"Constraint matrix has {constraints.A.shape[1]} columns, "
            f"basis has {design.basis.cardinality}"
        )
    return Y


def resolve_ridge(design: DesignMatrix, cfg: SolverConfig) -> float:
    """Gram regularization actually applied for a design matrix."""
    if cfg.ridge is not None:
        return float(cfg.ridge)
    psi = design.values
    n, K = psi.shape
    if n == 0:
        return 1.0
    if n >= K:
        s = scipy.linalg.svdvals(psi)
        if s[-1] > cfg.rank_tol * s[0]:
            return 0.0
    mean_diag = float(np.mean(np.sum(psi**2, axis=0)))
    return 1e-12 * mean_diag if mean_diag > 0 else 1.0


class GramFactor:
    """
    Cholesky factor of G = Psi^T Psi + gamma I.

    One factorization serves the unconstrained solve and the updating
    operator, and can be handed to later SULM fits that share Psi.
    """

    def __init__(self, design: DesignMatrix, ridge: float):
        psi = design.values
        K = design.basis.cardinality
        gram = psi.T @ psi + ridge * np.eye(K)
        try:
            self.lower = scipy.linalg.cholesky(gram, lower=True)
        except scipy.linalg.LinAlgError:
            raise SolverError(
                "Regularized Gram matrix is not positive definite; use a positive ridge"
            ) from None
        self.ridge = ridge
        self.cardinality = K
        self._design = design

    def matches(self, design: DesignMatrix) -> bool:
        return design is self._design

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """G^{-1} rhs."""
        return scipy.linalg.cho_solve((self.lower, True), rhs)

    def forward(self, rhs: np.ndarray) -> np.ndarray:
        """L^{-1} rhs."""
        return scipy.linalg.solve_triangular(self.lower, rhs, lower=True)

    def backward(self, rhs: np.ndarray) -> np.ndarray:
        """L^{-T} rhs."""
        return scipy.linalg.solve_triangular(self.lower, rhs, lower=True, trans="T")


def _finish(
    design: DesignMatrix,
    Y: np.ndarray,
    constraints: ConstraintSet,
    beta: np.ndarray,
    multipliers: np.ndarray,
    ridge: float,
    rank: int,
    timings: dict[str, float],
) -> FitResult:
    diag = residual_diagnostics(beta, design, Y, constraints)
    diag.chosen_p = design.basis.p
    diag.ridge = ridge
    diag.constraint_rank = rank
    diag.overconstrained = rank >= design.basis.cardinality and not constraints.is_empty
    diag.wall_time = timings
    if diag.overconstrained:
        logger.warning(
            "Constraint rank %d reaches the basis cardinality %d; constraints hold in a least-squares sense",
            rank,
            design.basis.cardinality,
        )
    return FitResult(Pc2Model(design.basis, beta), multipliers, diag)


# =============================================================================
# Estimators
# =============================================================================

def fit_ols(design: DesignMatrix, targets, cfg: SolverConfig | None = None) -> FitResult:
    """
    Ordinary least squares.

    Rank-deficient data matrices yield the minimum-norm solution.
    """
    cfg = cfg or SolverConfig(method=SolverMethod.OLS)
    Y = _check_inputs(design, targets, None)
    if design.n_rows == 0:
        raise SolverError("OLS needs at least one data row")

    start = time.perf_counter()
    ridge = resolve_ridge(design, cfg)
    psi = design.values
    if ridge > 0:
        K = design.basis.cardinality
        psi = np.vstack([psi, np.sqrt(ridge) * np.eye(K)])
        Y_aug = np.concatenate([Y, np.zeros(K)])
    else:
        Y_aug = Y
    beta, _, _, _ = scipy.linalg.lstsq(psi, Y_aug, cond=cfg.rank_tol)
    elapsed = time.perf_counter() - start

    logger.debug("OLS solved with ridge %.3g", ridge)
    return _finish(
        design, Y, ConstraintSet.empty(design.basis), beta, np.zeros(0), ridge, 0, {"solve": elapsed}
    )


def fit_kkt(
    design: DesignMatrix,
    targets,
    constraints: ConstraintSet,
    cfg: SolverConfig | None = None,
) -> FitResult:
    """
    Solve the blocked KKT system with a rank-revealing least-squares solver.

    An empty constraint set falls back to OLS.
    """
    cfg = cfg or SolverConfig(method=SolverMethod.KKT)
    Y = _check_inputs(design, targets, constraints)
    if constraints.is_empty:
        return fit_ols(design, Y, cfg)

    start = time.perf_counter()
    ridge = resolve_ridge(design, cfg)
    psi = design.values
    A = constraints.A
    K = design.basis.cardinality
    n_c = constraints.n_constraints

    kkt = np.zeros((K + n_c, K + n_c))
    kkt[:K, :K] = psi.T @ psi + ridge * np.eye(K)
    kkt[:K, K:] = A.T
    kkt[K:, :K] = A
    rhs = np.concatenate([psi.T @ Y, constraints.c])

    solution, _, _, _ = scipy.linalg.lstsq(kkt, rhs, cond=cfg.rank_tol, lapack_driver="gelsd")
    elapsed = time.perf_counter() - start

    rank = int(np.count_nonzero(_kept(scipy.linalg.svdvals(A), cfg.rank_tol)))
    logger.debug("KKT system of size %d solved with ridge %.3g", K + n_c, ridge)
    return _finish(design, Y, constraints, solution[:K], solution[K:], ridge, rank, {"solve": elapsed})


def fit_sulm(
    design: DesignMatrix,
    targets,
    constraints: ConstraintSet,
    cfg: SolverConfig | None = None,
    factor: GramFactor | None = None,
) -> FitResult:
    """
    Straightforward updating of Lagrange multipliers.

    Args:
        design: Data design matrix (may have zero rows)
        targets: Data values
        constraints: Equality constraints; empty falls back to the unconstrained solve
        cfg: Solver settings
        factor: Gram factorization from an earlier fit on the same design

    The reduced constraint matrix is used in its factored form
    Y_c = A J = -W^T W with W = L^{-1} A^T, so the multiplier solve is a thin
    SVD of W; singular Y_c gets the minimum-norm multipliers.
    """
    cfg = cfg or SolverConfig(method=SolverMethod.SULM)
    Y = _check_inputs(design, targets, constraints)
    if constraints.is_empty and design.n_rows > 0:
        return fit_ols(design, Y, cfg)

    timings: dict[str, float] = {}
    start = time.perf_counter()
    if factor is None or not factor.matches(design):
        factor = GramFactor(design, resolve_ridge(design, cfg))
    timings["factor"] = time.perf_counter() - start

    # Unconstrained estimate
    beta_tilde = factor.solve(design.values.T @ Y)
    if constraints.is_empty:
        timings["solve"] = time.perf_counter() - start
        return _finish(design, Y, constraints, beta_tilde, np.zeros(0), factor.ridge, 0, timings)

    A = constraints.A
    W = factor.forward(A.T)  # J = -L^{-T} W
    r = constraints.c - A @ beta_tilde

    _, s, Vt = scipy.linalg.svd(W, full_matrices=False, lapack_driver="gesdd")
    keep = _kept(s, cfg.rank_tol)
    rank = int(np.count_nonzero(keep))
    Vk = Vt[keep]
    lam = -(Vk.T @ ((Vk @ r) / s[keep] ** 2))

    beta = beta_tilde - factor.backward(W @ lam)
    timings["solve"] = time.perf_counter() - start

    logger.debug("SULM multiplier solve kept %d of %d singular directions", rank, s.size)
    return _finish(design, Y, constraints, beta, lam, factor.ridge, rank, timings)


_FITTERS: dict[SolverMethod, Callable] = {
    SolverMethod.KKT: fit_kkt,
    SolverMethod.SULM: fit_sulm,
}


def fit(problem: FitProblem, cfg: SolverConfig) -> FitResult:
    """Dispatch one fit on cfg.method."""
    if cfg.method is SolverMethod.OLS:
        return fit_ols(problem.design, problem.targets, cfg)
    return _FITTERS[cfg.method](problem.design, problem.targets, problem.constraints, cfg)


def fit_adaptive(build: Callable[[int], FitProblem], cfg: SolverConfig) -> FitResult:
    """
    Increase p until data, PDE and BC errors all fall below their thresholds.

    Args:
        build: Returns the fit problem (with validation data) for an order p
        cfg: Solver settings with adaptivity bounds

    Errors are measured on each problem's validation set, or on the
    training set when none is given. If p_max is reached without meeting
    the thresholds, the order with the smallest error sum is returned and
    marked as not converged.
    """
    if cfg.adaptivity is None:
        raise SolverError("fit_adaptive needs an adaptivity configuration")
    ad = cfg.adaptivity

    best: tuple[float, FitResult] | None = None
    for p in range(ad.p_min, ad.p_max + 1):
        problem = build(p)
        result = fit(problem, cfg)
        check = problem.validation or problem
        errors = residual_diagnostics(
            result.model.beta, check.design, np.asarray(check.targets, dtype=float), check.constraints
        )
        bc_error = errors.bc_residual_mse + errors.ic_residual_mse
        logger.info(
            "p=%d: data %.3e, PDE %.3e, BC %.3e", p, errors.data_mse, errors.pde_residual_mse, bc_error
        )
        validated = replace(
            result.diagnostics,
            data_mse=errors.data_mse,
            pde_residual_mse=errors.pde_residual_mse,
            bc_residual_mse=bc_error,
            chosen_p=p,
        )
        result = FitResult(result.model, result.multipliers, validated)
        if errors.data_mse <= ad.eps_data and errors.pde_residual_mse <= ad.eps_pde and bc_error <= ad.eps_bc:
            return result
        if best is None or validated.total_error < best[0]:
            best = (validated.total_error, result)

    chosen = best[1]
    logger.warning(
        "p-adaptivity reached p_max=%d without meeting the thresholds; using p=%d",
        ad.p_max,
        chosen.diagnostics.chosen_p,
    )
    chosen.diagnostics.converged = False
    return chosen
