"""Tests for the benchmark problem registry and references."""

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pc2.basis import BasisSpec, build_design_matrix
from pc2.constraints import ConstraintBlock, ConstraintTag, assemble
from pc2.problems import (
    PROBLEMS,
    ProblemError,
    RealizationReference,
    beam_mean_deflection,
    get_problem,
    heat_dirichlet_solution,
    toy_beam_solution,
)
from pc2.randomfield import field_derivatives
from pc2.sampling import SamplePlan, plan_points, sample_random
from pc2.solvers import fit_kkt, fit_ols, fit_sulm


@pytest.fixture(scope="module")
def toy_beam():
    return get_problem("toy_beam")


@pytest.fixture(scope="module")
def beam_kl():
    return get_problem("beam_kl", fd_nodes=201)


class TestRegistry:
    def test_known_problems(self):
        assert set(PROBLEMS) == {"toy_beam", "heat_dirichlet", "heat_neumann", "beam_kl", "heat_kl_source"}

    def test_unknown_problem(self):
        with pytest.raises(ProblemError, match="Unknown problem"):
            get_problem("plate")

    def test_bad_option(self):
        with pytest.raises(ProblemError, match="Invalid options"):
            get_problem("toy_beam", n_modes=3)

    @pytest.mark.parametrize("name, dim, facets", [
        ("toy_beam", 2, 4),
        ("heat_dirichlet", 4, 4),
        ("heat_neumann", 4, 4),
    ])
    def test_layout(self, name, dim, facets):
        problem = get_problem(name)
        assert problem.input.dim == dim
        assert len(problem.boundary) == facets
        assert problem.name == name


class TestToyBeam:
    """The toy beam solution is a degree-5 polynomial, so p = 6 represents it exactly."""

    def test_closed_form(self):
        assert toy_beam_solution(0.5, 1.0) == pytest.approx(-5.0 / 384.0)
        np.testing.assert_allclose(toy_beam_solution(np.array([0.0, 1.0]), 2.0), 0.0)

    def test_exact_solution_satisfies_constraints(self, toy_beam):
        basis = BasisSpec.create(toy_beam.input, 6)
        rng = np.random.default_rng(0)
        train = toy_beam.sample_interior(100, rng)
        model = fit_ols(build_design_matrix(basis, train), toy_beam.reference.evaluate(train)).model
        plan = plan_points(toy_beam, SamplePlan(n_V=30, n_BC=12, seed=1), basis)
        constraints = assemble(toy_beam.constraint_blocks(plan), basis)
        assert constraints.count(ConstraintTag.PDE) == 30
        np.testing.assert_allclose(constraints.residual(model.beta), 0.0, atol=1e-7)

    def test_not_time_dependent(self, toy_beam):
        assert not toy_beam.is_time_dependent
        with pytest.raises(ProblemError):
            toy_beam.initial_data(np.zeros((1, 2)))

    def test_evaluation_set(self, toy_beam):
        points, values = toy_beam.evaluation_set(50, np.random.default_rng(3))
        assert points.shape == (50, 2)
        np.testing.assert_allclose(values, toy_beam_solution(points[:, 0], points[:, 1]))


class TestHeat:
    def test_dirichlet_solution_satisfies_pde(self):
        x, y, t, D, h = 0.3, 0.7, 0.4, 0.05, 1e-4

        def u(x_, y_, t_):
            return heat_dirichlet_solution(x_, y_, t_, D)

        u_t = (u(x, y, t + h) - u(x, y, t - h)) / (2 * h)
        lap = (u(x + h, y, t) + u(x - h, y, t) + u(x, y + h, t) + u(x, y - h, t) - 4 * u(x, y, t)) / h**2
        assert u_t == pytest.approx(D * lap, rel=1e-5)

    def test_initial_data(self):
        heat = get_problem("heat_dirichlet")
        points = np.array([[0.25, 0.25, 0.0, 0.05], [0.25, 0.75, 0.0, 0.01]])
        np.testing.assert_allclose(heat.initial_data(points), [1.0, -1.0])

    def test_neumann_reference_is_per_diffusivity(self):
        heat = get_problem("heat_neumann", fd_nx=20, fd_dt=0.05)
        assert heat.reference.realization_dims == (3,)
        points, values = heat.evaluation_set(40, np.random.default_rng(0), n_realizations=2)
        assert np.unique(points[:, 3]).size == 2
        assert np.all(np.isfinite(values))

    def test_kl_source_layout(self):
        heat = get_problem("heat_kl_source", n_modes=3, grid_nodes=16)
        assert heat.input.dim == 6
        assert heat.reference.realization_dims == (3, 4, 5)
        assert heat.fields["source"].n_modes == 3
        assert heat.defaults.n_train == 1000

    def test_kl_source_training_data(self):
        heat = get_problem("heat_kl_source", n_modes=2, grid_nodes=16, fd_nx=10, fd_dt=0.1, train_fields=2)
        points, values = heat.training_data(12, np.random.default_rng(4))
        assert points.shape == (12, 5)
        assert values.shape == (12,)
        # each source realization contributes half of the rows
        assert np.unique(points[:, 3]).size == 2
        assert heat.training_data(0, np.random.default_rng(4))[0].shape == (0, 5)

    def test_kl_source_at_mean_germ_is_dirichlet_heat(self):
        heat = get_problem("heat_kl_source", n_modes=2, grid_nodes=16, fd_nx=40, fd_dt=0.01)
        rng = np.random.default_rng(5)
        points = np.column_stack([rng.uniform(0.0, 1.0, (200, 3)), np.zeros((200, 2))])
        exact = heat_dirichlet_solution(points[:, 0], points[:, 1], points[:, 2], 0.01)
        assert np.mean((heat.reference.evaluate(points) - exact) ** 2) < 1e-4
        constraints = assemble([ConstraintBlock(heat.pde, points, ConstraintTag.PDE)], BasisSpec.create(heat.input, 2))
        np.testing.assert_array_equal(constraints.c, 0.0)


class TestBeamKL:
    def test_inputs(self, beam_kl):
        assert list(beam_kl.input.names) == ["x", "xi1", "xi2", "xi3", "xi4", "xi5"]
        assert beam_kl.fields["stiffness"].n_modes == 5
        assert beam_kl.fields["stiffness"].variance_fraction >= 0.99

    def test_mean_field_reference_matches_constant_stiffness(self, beam_kl):
        x = np.linspace(0.0, 10.0, 11)
        points = np.column_stack([x, np.zeros((11, 5))])
        expected = beam_mean_deflection(x, -5.0, 10.0, 8000.0)
        np.testing.assert_allclose(beam_kl.reference.evaluate(points), expected, rtol=1e-4, atol=1e-9)

    def test_product_rule_row(self):
        beam = get_problem("beam_kl", n_modes=2, grid_nodes=101)
        stiffness = beam.fields["stiffness"]
        basis = BasisSpec.create(beam.input, 4)
        rng = np.random.default_rng(0)
        train = sample_random(beam.input, 100, rng)
        # u = x^4: u'' = 12 x^2, u''' = 24 x, u'''' = 24
        model = fit_ols(build_design_matrix(basis, train), train[:, 0] ** 4).model
        points = sample_random(beam.input, 20, rng)
        constraints = assemble([ConstraintBlock(beam.pde, points, ConstraintTag.PDE)], basis)
        x, germs = points[:, 0], points[:, 1:]
        ei, ei_x, ei_xx = (field_derivatives(stiffness, germs, x, k) for k in range(3))
        expected = (24.0 * ei + 2.0 * ei_x * 24.0 * x + ei_xx * 12.0 * x**2) / 8000.0
        np.testing.assert_allclose(constraints.A @ model.beta, expected, rtol=1e-7)
        np.testing.assert_allclose(constraints.c, -5.0 / 8000.0)

    @pytest.mark.parametrize("solver", [fit_kkt, fit_sulm])
    def test_physics_only_surrogate(self, beam_kl, solver):
        basis = BasisSpec.create(beam_kl.input, 4)
        plan = plan_points(beam_kl, SamplePlan(n_V=500, n_BC=100, seed=0), basis)
        constraints = assemble(beam_kl.constraint_blocks(plan), basis)
        result = solver(build_design_matrix(basis, np.zeros((0, 6))), np.zeros(0), constraints)

        x = np.linspace(0.0, 10.0, 11)
        predicted = result.model.predict(np.column_stack([x, np.zeros((11, 5))]))
        expected = beam_mean_deflection(x, -5.0, 10.0, 8000.0)
        assert predicted[5] < 0.0
        assert predicted[5] == pytest.approx(expected[5], rel=0.1)
        np.testing.assert_allclose(predicted, expected, atol=1e-2)

        points, values = beam_kl.evaluation_set(200, np.random.default_rng(1), n_realizations=4)
        assert np.mean((result.model.predict(points) - values) ** 2) < 1e-4


class TestRealizationReference:
    def test_solves_once_per_realization(self):
        calls = []

        def solve(realization):
            calls.append(realization.copy())
            return lambda pts: pts[:, 0] * realization[0]

        reference = RealizationReference((1,), solve)
        points = np.array([[1.0, 2.0], [3.0, 2.0], [1.0, 5.0]])
        np.testing.assert_allclose(reference.evaluate(points), [2.0, 6.0, 5.0])
        reference.evaluate(points)
        assert len(calls) == 2

    def test_cache_eviction(self):
        calls = []
        reference = RealizationReference((0,), lambda r: calls.append(r) or (lambda pts: pts[:, 0]), cache_size=1)
        reference.evaluate([[1.0]])
        reference.evaluate([[2.0]])
        reference.evaluate([[1.0]])
        assert len(calls) == 3

    def test_distinct_realizations_solve_concurrently(self):
        barrier = threading.Barrier(2, timeout=10)

        def solve(realization):
            # both solves must be in flight at once to pass the barrier
            barrier.wait()
            return lambda pts: np.full(pts.shape[0], realization[0])

        reference = RealizationReference((0,), solve)
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = [pool.submit(reference.evaluate, [[value]]) for value in (1.0, 2.0)]
            results = [f.result() for f in futures]
        np.testing.assert_allclose(np.concatenate(results), [1.0, 2.0])
