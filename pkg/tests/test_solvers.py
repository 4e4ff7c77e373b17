"""Tests for the OLS, KKT and SULM estimators."""

import logging

import numpy as np
import pytest
from pc2.basis import BasisSpec, DeterministicInterval, InputSpec, UniformRandom, build_design_matrix
from pc2.constraints import ConstraintSet, ConstraintTag, LinearOperator, OperatorBuilder, assemble
from pc2.solvers import (
    AdaptivityConfig,
    FitProblem,
    GramFactor,
    Pc2Model,
    SolverConfig,
    SolverError,
    SolverMethod,
    fit,
    fit_adaptive,
    fit_kkt,
    fit_ols,
    fit_sulm,
    predict_derivative,
    resolve_ridge,
)
from pc2.problems import get_problem
from pc2.sampling import SamplePlan, plan_points


@pytest.fixture
def spec():
    return InputSpec((DeterministicInterval("x", 0.0, 1.0), UniformRandom("a", -1.0, 1.0)))


def random_problem(spec, rng, p=4, n_data=60, n_c=8):
    basis = BasisSpec.create(spec, p)
    design = build_design_matrix(basis, rng.uniform([0, -1], [1, 1], (n_data, 2)))
    constraints = ConstraintSet(
        A=rng.standard_normal((n_c, basis.cardinality)),
        c=rng.standard_normal(n_c),
        tags=(ConstraintTag.PDE,) * n_c,
        points=np.zeros((n_c, 2)),
    )
    return design, rng.standard_normal(n_data), constraints


class TestOLS:
    def test_recovers_polynomial(self, spec):
        rng = np.random.default_rng(0)
        basis = BasisSpec.create(spec, 3)
        points = rng.uniform([0, -1], [1, 1], (40, 2))
        y = 1.0 + points[:, 0] ** 2 * points[:, 1] - 2.0 * points[:, 1] ** 3
        result = fit_ols(build_design_matrix(basis, points), y)
        test = rng.uniform([0, -1], [1, 1], (10, 2))
        expected = 1.0 + test[:, 0] ** 2 * test[:, 1] - 2.0 * test[:, 1] ** 3
        np.testing.assert_allclose(result.model.predict(test), expected, atol=1e-10)
        assert result.diagnostics.data_mse < 1e-20
        assert result.diagnostics.ridge == 0.0

    def test_no_rows(self, spec):
        basis = BasisSpec.create(spec, 2)
        with pytest.raises(SolverError, match="at least one data row"):
            fit_ols(build_design_matrix(basis, np.zeros((0, 2))), np.zeros(0))

    def test_target_count_mismatch(self, spec):
        basis = BasisSpec.create(spec, 2)
        with pytest.raises(SolverError):
            fit_ols(build_design_matrix(basis, np.full((3, 2), 0.5)), np.zeros(4))


class TestConstrainedSolvers:
    """Test KKT and SULM on shared instances."""

    @pytest.mark.parametrize("seed", range(5))
    def test_kkt_and_sulm_agree(self, spec, seed):
        design, y, constraints = random_problem(spec, np.random.default_rng(seed))
        kkt = fit_kkt(design, y, constraints)
        sulm = fit_sulm(design, y, constraints)
        np.testing.assert_allclose(sulm.model.beta, kkt.model.beta, rtol=0, atol=1e-8 * np.abs(kkt.model.beta).max())
        np.testing.assert_allclose(sulm.multipliers, kkt.multipliers, rtol=0, atol=1e-6 * np.abs(kkt.multipliers).max())

    @pytest.mark.parametrize("solver", [fit_kkt, fit_sulm])
    def test_constraints_hold(self, spec, solver):
        design, y, constraints = random_problem(spec, np.random.default_rng(7))
        result = solver(design, y, constraints)
        np.testing.assert_allclose(constraints.residual(result.model.beta), 0.0, atol=1e-9)
        assert result.diagnostics.pde_residual_mse < 1e-18
        assert not result.diagnostics.overconstrained
        assert result.diagnostics.constraint_rank == 8

    @pytest.mark.parametrize("solver", [fit_kkt, fit_sulm])
    def test_empty_constraints_fall_back_to_ols(self, spec, solver):
        design, y, constraints = random_problem(spec, np.random.default_rng(3))
        empty = ConstraintSet.empty(design.basis)
        np.testing.assert_allclose(solver(design, y, empty).model.beta, fit_ols(design, y).model.beta, atol=1e-10)

    @pytest.mark.parametrize("solver", [fit_kkt, fit_sulm])
    def test_duplicate_constraints(self, solver):
        spec = InputSpec((DeterministicInterval("x", 0.0, 1.0),))
        basis = BasisSpec.create(spec, 0)
        constraints = assemble([(LinearOperator.identity(1, 2.0), np.array([[0.3], [0.3]]), ConstraintTag.BC)], basis)
        result = solver(build_design_matrix(basis, np.zeros((0, 1))), np.zeros(0), constraints)
        assert result.model.beta[0] == pytest.approx(2.0)
        np.testing.assert_allclose(result.multipliers, [-1.0, -1.0], atol=1e-10)
        assert result.diagnostics.overconstrained

    @pytest.mark.parametrize("solver", [fit_kkt, fit_sulm])
    def test_inconsistent_constraints_least_squares(self, solver, caplog):
        spec = InputSpec((DeterministicInterval("x", 0.0, 1.0),))
        basis = BasisSpec.create(spec, 0)
        constraints = ConstraintSet(
            A=np.ones((2, 1)), c=np.array([1.0, 3.0]), tags=(ConstraintTag.BC,) * 2, points=np.zeros((2, 1))
        )
        with caplog.at_level(logging.WARNING, logger="pc2.solvers"):
            result = solver(build_design_matrix(basis, np.zeros((0, 1))), np.zeros(0), constraints)
        assert result.model.beta[0] == pytest.approx(2.0)
        assert result.diagnostics.bc_residual_mse == pytest.approx(1.0)
        assert "least-squares sense" in caplog.text

    def test_pure_physics_fit(self):
        # u'' = 2 on [0, 1] with u(0) = 0, u(1) = 1 has the solution u = x^2
        spec = InputSpec((DeterministicInterval("x", 0.0, 1.0),))
        basis = BasisSpec.create(spec, 4)
        pde = OperatorBuilder(spec, "u_xx").term(1.0, x=2).rhs(2.0).build()
        constraints = assemble(
            [
                (pde, np.linspace(0.05, 0.95, 10)[:, None], ConstraintTag.PDE),
                (LinearOperator.identity(1, 0.0), np.array([[0.0]]), ConstraintTag.BC),
                (LinearOperator.identity(1, 1.0), np.array([[1.0]]), ConstraintTag.BC),
            ],
            basis,
        )
        design = build_design_matrix(basis, np.zeros((0, 1)))
        x = np.linspace(0, 1, 11)[:, None]
        for solver in (fit_kkt, fit_sulm):
            result = solver(design, np.zeros(0), constraints)
            np.testing.assert_allclose(result.model.predict(x), x[:, 0] ** 2, atol=1e-8)
            np.testing.assert_allclose(predict_derivative(result.model, x, (1,)), 2 * x[:, 0], atol=1e-7)
            assert result.diagnostics.ridge == 1.0

    @pytest.mark.parametrize("seed", range(3))
    def test_optimality_conditions(self, spec, seed):
        design, y, constraints = random_problem(spec, np.random.default_rng(seed))
        psi, A = design.values, constraints.A
        gram = psi.T @ psi
        scale = np.abs(psi.T @ y).max()
        for solver in (fit_kkt, fit_sulm):
            result = solver(design, y, constraints)
            beta, lam = result.model.beta, result.multipliers
            stationarity = gram @ beta + A.T @ lam - psi.T @ y
            assert np.abs(stationarity).max() <= 1e-8 * scale
            np.testing.assert_allclose(A @ beta, constraints.c, atol=1e-9)

    def test_ill_conditioned_rank_agrees(self):
        problem = get_problem("toy_beam")
        basis = BasisSpec.create(problem.input, 6)
        points = plan_points(problem, SamplePlan(n_V=200, n_BC=40, seed=0), basis)
        constraints = assemble(problem.constraint_blocks(points), basis)
        s = np.linalg.svd(constraints.A, compute_uv=False)
        assert s[0] / s[-1] > 1e5
        design = build_design_matrix(basis, np.zeros((0, 2)))
        kkt = fit_kkt(design, np.zeros(0), constraints)
        sulm = fit_sulm(design, np.zeros(0), constraints)
        assert kkt.diagnostics.constraint_rank == sulm.diagnostics.constraint_rank == basis.cardinality
        assert kkt.diagnostics.overconstrained and sulm.diagnostics.overconstrained
        eval_pts, eval_ref = problem.evaluation_set(500, np.random.default_rng(1))
        for result in (kkt, sulm):
            assert np.mean((result.model.predict(eval_pts) - eval_ref) ** 2) < 1e-10

    def test_gram_factor_reuse(self, spec):
        design, y, constraints = random_problem(spec, np.random.default_rng(11))
        first = fit_sulm(design, y, constraints)
        factor = GramFactor(design, first.diagnostics.ridge)
        assert factor.matches(design)
        other = ConstraintSet(constraints.A[:4], constraints.c[:4], constraints.tags[:4], constraints.points[:4])
        reused = fit_sulm(design, y, other, factor=factor)
        fresh = fit_sulm(design, y, other)
        np.testing.assert_allclose(reused.model.beta, fresh.model.beta, atol=1e-12)

    def test_dispatch(self, spec):
        design, y, constraints = random_problem(spec, np.random.default_rng(5))
        problem = FitProblem(design, y, constraints)
        for method in SolverMethod:
            result = fit(problem, SolverConfig(method=method))
            assert result.model.beta.shape == (design.basis.cardinality,)


class TestRidge:
    def test_explicit(self, spec):
        design, _, _ = random_problem(spec, np.random.default_rng(0))
        assert resolve_ridge(design, SolverConfig(ridge=0.5)) == 0.5

    def test_no_rows(self, spec):
        basis = BasisSpec.create(spec, 2)
        assert resolve_ridge(build_design_matrix(basis, np.zeros((0, 2))), SolverConfig()) == 1.0

    def test_full_rank(self, spec):
        design, _, _ = random_problem(spec, np.random.default_rng(0))
        assert resolve_ridge(design, SolverConfig()) == 0.0

    def test_rank_deficient(self, spec):
        basis = BasisSpec.create(spec, 3)
        design = build_design_matrix(basis, np.random.default_rng(0).uniform([0, -1], [1, 1], (4, 2)))
        gamma = resolve_ridge(design, SolverConfig())
        mean_diag = np.mean(np.sum(design.values**2, axis=0))
        assert gamma == pytest.approx(1e-12 * mean_diag)


class TestConfigAndModel:
    def test_method_from_string(self):
        assert SolverConfig(method="sulm").method is SolverMethod.SULM

    def test_unknown_method(self):
        with pytest.raises(SolverError, match="Unknown solver method"):
            SolverConfig(method="FOO")

    def test_negative_ridge(self):
        with pytest.raises(SolverError):
            SolverConfig(ridge=-1.0)

    def test_adaptivity_bounds(self):
        with pytest.raises(SolverError):
            AdaptivityConfig(p_min=5, p_max=3)

    def test_model_size_check(self, spec):
        with pytest.raises(SolverError):
            Pc2Model(BasisSpec.create(spec, 2), np.zeros(3))

    def test_model_coefficients_read_only(self, spec):
        model = Pc2Model(BasisSpec.create(spec, 1), np.zeros(3))
        with pytest.raises(ValueError):
            model.beta[0] = 1.0


class TestAdaptivity:
    """Test p-adaptivity on a data fit of exp(x)."""

    @pytest.fixture
    def build(self):
        spec = InputSpec((DeterministicInterval("x", -1.0, 1.0),))
        rng = np.random.default_rng(0)
        train = rng.uniform(-1, 1, (80, 1))
        valid = rng.uniform(-1, 1, (200, 1))

        def build(p):
            basis = BasisSpec.create(spec, p)
            empty = ConstraintSet.empty(basis)
            validation = FitProblem(build_design_matrix(basis, valid), np.exp(valid[:, 0]), empty)
            return FitProblem(build_design_matrix(basis, train), np.exp(train[:, 0]), empty, validation)

        return build

    def test_stops_at_first_order_meeting_thresholds(self, build):
        cfg = SolverConfig(method=SolverMethod.OLS, adaptivity=AdaptivityConfig(p_min=1, p_max=15, eps_data=1e-10))
        result = fit_adaptive(build, cfg)
        assert result.diagnostics.converged
        assert result.diagnostics.data_mse <= 1e-10
        below = fit_adaptive(build, SolverConfig(
            method=SolverMethod.OLS,
            adaptivity=AdaptivityConfig(p_min=1, p_max=result.diagnostics.chosen_p - 1, eps_data=1e-10),
        ))
        assert not below.diagnostics.converged

    def test_unreachable_thresholds_return_best(self, build, caplog):
        cfg = SolverConfig(method=SolverMethod.OLS, adaptivity=AdaptivityConfig(p_min=1, p_max=6, eps_data=0.0))
        with caplog.at_level(logging.WARNING, logger="pc2.solvers"):
            result = fit_adaptive(build, cfg)
        assert not result.diagnostics.converged
        assert result.diagnostics.chosen_p == 6
        assert "p_max" in caplog.text

    def test_requires_adaptivity(self, build):
        with pytest.raises(SolverError):
            fit_adaptive(build, SolverConfig(method=SolverMethod.OLS))


class TestConstrainedAdaptivity:
    """Test p-adaptivity on u'' = 2, u(0) = 0, u(1) = 1, whose solution x^2 needs p = 2."""

    @pytest.fixture
    def build(self):
        spec = InputSpec((DeterministicInterval("x", 0.0, 1.0),))
        pde = OperatorBuilder(spec, "u_xx").term(1.0, x=2).rhs(2.0).build()

        def build(p):
            basis = BasisSpec.create(spec, p)
            constraints = assemble(
                [
                    (pde, np.linspace(0.05, 0.95, 10)[:, None], ConstraintTag.PDE),
                    (LinearOperator.identity(1, 0.0), np.array([[0.0]]), ConstraintTag.BC),
                    (LinearOperator.identity(1, 1.0), np.array([[1.0]]), ConstraintTag.BC),
                ],
                basis,
            )
            return FitProblem(build_design_matrix(basis, np.zeros((0, 1))), np.zeros(0), constraints)

        return build

    @pytest.mark.parametrize("method", [SolverMethod.KKT, SolverMethod.SULM])
    def test_stops_at_exact_order(self, build, method):
        cfg = SolverConfig(method=method, adaptivity=AdaptivityConfig(p_min=0, p_max=6, eps_pde=1e-12, eps_bc=1e-12))
        result = fit_adaptive(build, cfg)
        assert result.diagnostics.converged
        assert result.diagnostics.chosen_p == 2
        assert result.model.basis.p == 2

    def test_infinite_thresholds_return_p_min(self, build):
        cfg = SolverConfig(method=SolverMethod.SULM, adaptivity=AdaptivityConfig(p_min=1, p_max=6))
        result = fit_adaptive(build, cfg)
        assert result.diagnostics.chosen_p == 1
        assert result.diagnostics.converged
