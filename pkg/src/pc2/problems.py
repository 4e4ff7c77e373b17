"""
Benchmark problem definitions.

Each problem bundles its inputs, the PDE operator enforced at virtual
points, boundary and initial operators on facets of the domain, a reference
solution and default training settings:

    toy_beam           u_xxxx + q = 0 on [0, 1], q ~ U[1, 2]           analytic
    heat_dirichlet     u_t = D lap(u), u = 0 on the boundary             analytic
    heat_neumann       u_t = D lap(u), zero normal flux                  finite differences
    beam_kl            (EI u'')'' = q with a KL stiffness field           finite differences
    heat_kl_source     u_t - D lap(u) = f with a KL source field         finite differences

Numerical references are solved once per distinct realization of their
random inputs (a diffusivity value or a germ vector) and cached.
"""

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pc2.basis import (
    DeterministicInterval,
    GaussianRandom,
    InputSpec,
    UniformRandom,
    as_points,
)
from pc2.constraints import (
    ConstraintBlock,
    ConstraintTag,
    LinearOperator,
    OperatorBuilder,
)
from pc2.errors import Pc2Error
from pc2.finite_difference import FDHeatSettings, HeatBoundary, fd_beam, fd_heat
from pc2.randomfield import Kernel, KLField, field_derivatives, kl_decompose, realize, uniform_grid
from pc2.sampling import PointPlan, sample_random

logger = logging.getLogger(__name__)


class ProblemError(Pc2Error):
    """Raised for unknown problems or invalid problem options."""
    pass


# =============================================================================
# References
# =============================================================================

class Reference(ABC):
    """Reference solution evaluable at arbitrary input points."""

    realization_dims: tuple[int, ...] = ()

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pass


class AnalyticReference(Reference):
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(points)), dtype=float)


class RealizationReference(Reference):
    """
    Numerical reference solved per realization of some input dimensions.

    solve(realization) returns an evaluator taking the full (n, M) points of
    that realization.
    """

    def __init__(
        self,
        realization_dims: tuple[int, ...],
        solve: Callable[[np.ndarray], Callable[[np.ndarray], np.ndarray]],
        cache_size: int = 32,
    ):
        self.realization_dims = tuple(realization_dims)
        self.solve = solve
        self.cache_size = cache_size
        self._cache: dict[tuple[float, ...], Callable[[np.ndarray], np.ndarray]] = {}
        self._lock = threading.Lock()

    def evaluator(self, realization: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        key = tuple(float(v) for v in realization)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached

        # solved outside the lock; concurrent solves of one key keep the first result
        solved = self.solve(np.asarray(key))
        with self._lock:
            if key not in self._cache and len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            return self._cache.setdefault(key, solved)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.empty(pts.shape[0])
        keys = pts[:, list(self.realization_dims)]
        unique, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        if unique.shape[0] > self.cache_size:
            logger.warning("Reference evaluation needs %d numerical solves", unique.shape[0])
        for k, realization in enumerate(unique):
            rows = inverse == k
            values[rows] = self.evaluator(realization)(pts[rows])
        return values


# =============================================================================
# Problem definition
# =============================================================================

@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """An operator enforced on the facet where the given coordinates are fixed."""
    operator: LinearOperator
    facet: dict[str, float]
    tag: ConstraintTag = ConstraintTag.BC


@dataclass(frozen=True)
class ProblemDefaults:
    p: int
    q: float = 1.0
    n_V: int = 200
    n_BC: int = 40
    n_init: int = 0
    n_train: int = 0


@dataclass(eq=False)
class ProblemDef:
    name: str
    input: InputSpec
    pde: LinearOperator
    boundary: tuple[BoundaryCondition, ...]
    reference: Reference
    defaults: ProblemDefaults
    initial: BoundaryCondition | None = None
    training_data: Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray]] | None = None
    fields: dict[str, KLField] = field(default_factory=dict)
    description: str = ""

    @property
    def is_time_dependent(self) -> bool:
        return self.initial is not None

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_random(self.input, n, rng)

    def constraint_blocks(self, plan: PointPlan) -> list[ConstraintBlock]:
        """PDE, boundary and hard initial blocks for a point plan."""
        blocks = [ConstraintBlock(self.pde, plan.virtual, ConstraintTag.PDE)]
        for bc, points in zip(self.boundary, plan.boundary):
            blocks.append(ConstraintBlock(bc.operator, points, bc.tag))
        if self.initial is not None and plan.initial.shape[0]:
            blocks.append(ConstraintBlock(self.initial.operator, plan.initial, ConstraintTag.IC))
        return blocks

    def initial_data(self, points: np.ndarray) -> np.ndarray:
        """Initial-condition values used as soft data."""
        if self.initial is None:
            raise ProblemError(f"Problem {self.name!r} has no initial condition")
        pts = as_points(points, self.input.dim)
        rhs = self.initial.operator.rhs
        return np.asarray(rhs(pts) if callable(rhs) else np.full(pts.shape[0], rhs), dtype=float)

    def evaluation_set(
        self,
        n: int,
        rng: np.random.Generator,
        n_realizations: int = 8,
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Seeded evaluation points with reference values.

        Numerical references draw n_realizations realizations and spread the
        points over them.
        """
        points = sample_random(self.input, n, rng)
        dims = list(self.reference.realization_dims)
        if dims:
            realizations = sample_random(self.input, n_realizations, rng)[:, dims]
            points[:, dims] = realizations[np.arange(n) % n_realizations]
        return points, self.reference.evaluate(points)


# =============================================================================
# Closed forms
# =============================================================================

def toy_beam_solution(x, q) -> np.ndarray:
    """u(x, q) = q(-x^4 + 2x^3 - x) / 24."""
    x = np.asarray(x, dtype=float)
    return np.asarray(q, dtype=float) * (-x**4 + 2.0 * x**3 - x) / 24.0


def heat_dirichlet_solution(x, y, t, D) -> np.ndarray:
    """u = sin(2 pi x) sin(2 pi y) exp(-8 pi^2 D t)."""
    return (
        np.sin(2 * np.pi * np.asarray(x))
        * np.sin(2 * np.pi * np.asarray(y))
        * np.exp(-8 * np.pi**2 * np.asarray(D) * np.asarray(t))
    )


def beam_mean_deflection(x, load: float, length: float, stiffness: float) -> np.ndarray:
    """Constant-stiffness deflection u = q(x^4 - 2Lx^3 + L^3 x) / (24 EI)."""
    x = np.asarray(x, dtype=float)
    return load * (x**4 - 2 * length * x**3 + length**3 * x) / (24.0 * stiffness)


def _dirichlet_ic(points: np.ndarray) -> np.ndarray:
    return np.sin(2 * np.pi * points[:, 0]) * np.sin(2 * np.pi * points[:, 1])


def _neumann_ic(points: np.ndarray) -> np.ndarray:
    return 0.5 * (np.sin(4 * np.pi * points[:, 0]) + np.sin(4 * np.pi * points[:, 1]))


# =============================================================================
# Problems
# =============================================================================

def problem_toy_beam() -> ProblemDef:
    spec = InputSpec((DeterministicInterval("x", 0.0, 1.0), UniformRandom("q", 1.0, 2.0)))
    pde = OperatorBuilder(spec, "u_xxxx + q").term(1.0, x=4).rhs(lambda p: -p[:, 1]).build()
    boundary = tuple(
        BoundaryCondition(OperatorBuilder(spec, name).term(1.0, x=order).build(), {"x": x0})
        for name, order, x0 in (
            ("u(0)", 0, 0.0),
            ("u(1)", 0, 1.0),
            ("u_xx(0)", 2, 0.0),
            ("u_xx(1)", 2, 1.0),
        )
    )
    return ProblemDef(
        name="toy_beam",
        input=spec,
        pde=pde,
        boundary=boundary,
        reference=AnalyticReference(lambda p: toy_beam_solution(p[:, 0], p[:, 1])),
        defaults=ProblemDefaults(p=6, n_V=200, n_BC=40),
        description="Euler-Bernoulli beam with a uniform random load",
    )


def _heat_spec(extra) -> InputSpec:
    return InputSpec((
        DeterministicInterval("x", 0.0, 1.0),
        DeterministicInterval("y", 0.0, 1.0),
        DeterministicInterval("t", 0.0, 1.0),
        *extra,
    ))


def _heat_operator(spec: InputSpec, diffusivity, rhs=0.0) -> LinearOperator:
    return (
        OperatorBuilder(spec, "u_t - D lap(u)")
        .term(1.0, t=1)
        .term(diffusivity, x=2)
        .term(diffusivity, y=2)
        .rhs(rhs)
        .build()
    )


def _facet_conditions(spec: InputSpec, neumann: bool) -> tuple[BoundaryCondition, ...]:
    conditions = []
    for name in ("x", "y"):
        for value in (0.0, 1.0):
            order = 1 if neumann else 0
            label = f"u_{name}({name}={value:g})" if neumann else f"u({name}={value:g})"
            op = OperatorBuilder(spec, label).term(1.0, **{name: order}).build()
            conditions.append(BoundaryCondition(op, {name: value}))
    return tuple(conditions)


def _initial_condition(spec: InputSpec, values) -> BoundaryCondition:
    return BoundaryCondition(
        LinearOperator.identity(spec.dim, values, "u(t=0)"), {"t": 0.0}, ConstraintTag.IC
    )


def problem_heat_dirichlet() -> ProblemDef:
    spec = _heat_spec([UniformRandom("D", 0.001, 0.1)])
    return ProblemDef(
        name="heat_dirichlet",
        input=spec,
        pde=_heat_operator(spec, lambda p: -p[:, 3]),
        boundary=_facet_conditions(spec, neumann=False),
        initial=_initial_condition(spec, _dirichlet_ic),
        reference=AnalyticReference(
            lambda p: heat_dirichlet_solution(p[:, 0], p[:, 1], p[:, 2], p[:, 3])
        ),
        defaults=ProblemDefaults(p=12, n_V=1000, n_BC=1000, n_init=1000),
        description="2D heat equation with random diffusivity and zero Dirichlet boundaries",
    )


def problem_heat_neumann(fd_nx: int = 100, fd_dt: float = 1e-3) -> ProblemDef:
    spec = _heat_spec([UniformRandom("D", 0.001, 0.1)])
    settings = FDHeatSettings(nx=fd_nx, ny=fd_nx, dt=fd_dt, boundary=HeatBoundary.NEUMANN)

    def solve(realization: np.ndarray):
        solution = fd_heat(
            settings,
            float(realization[0]),
            lambda X, Y: 0.5 * (np.sin(4 * np.pi * X) + np.sin(4 * np.pi * Y)),
        )
        return lambda pts: solution.interpolate(pts[:, :3])

    return ProblemDef(
        name="heat_neumann",
        input=spec,
        pde=_heat_operator(spec, lambda p: -p[:, 3]),
        boundary=_facet_conditions(spec, neumann=True),
        initial=_initial_condition(spec, _neumann_ic),
        reference=RealizationReference((3,), solve),
        defaults=ProblemDefaults(p=14, n_V=1000, n_BC=2000, n_init=2000),
        description="2D heat equation with random diffusivity and zero-flux boundaries",
    )


BEAM_LENGTH = 10.0
BEAM_LOAD = -5.0
BEAM_MEAN_STIFFNESS = 8000.0


def problem_beam_kl(n_modes: int = 5, grid_nodes: int = 201, fd_nodes: int = 1001) -> ProblemDef:
    """
    Simply supported beam whose bending stiffness is a KL random field.

    Units are kN and m: mean EI = 8000 kN m^2 with 5 % standard deviation,
    q = -5 kN/m, L = 10 m, correlation length 5 m.

    PDE rows and their rhs are divided by the mean EI, which keeps them of
    the order of the boundary rows. The constraints are only satisfiable in
    a least-squares sense at finite p.
    """
    stiffness = kl_decompose(
        Kernel(correlation_length=5.0, std=0.05 * BEAM_MEAN_STIFFNESS),
        uniform_grid(0.0, BEAM_LENGTH, grid_nodes),
        target=int(n_modes),
        mean=BEAM_MEAN_STIFFNESS,
    )
    germs = [GaussianRandom(f"xi{i + 1}", 0.0, 1.0) for i in range(n_modes)]
    spec = InputSpec((DeterministicInterval("x", 0.0, BEAM_LENGTH), *germs))

    def coefficient(order: int, scale: float):
        factor = scale / BEAM_MEAN_STIFFNESS
        return lambda p: factor * field_derivatives(stiffness, p[:, 1:], p[:, 0], order)

    # (EI u'')'' = EI u'''' + 2 EI' u''' + EI'' u'', divided through by the mean EI
    pde = (
        OperatorBuilder(spec, "(EI u'')'' / EI_mean")
        .term(coefficient(0, 1.0), x=4)
        .term(coefficient(1, 2.0), x=3)
        .term(coefficient(2, 1.0), x=2)
        .rhs(BEAM_LOAD / BEAM_MEAN_STIFFNESS)
        .build()
    )
    boundary = tuple(
        BoundaryCondition(OperatorBuilder(spec, name).term(1.0, x=order).build(), {"x": x0})
        for name, order, x0 in (
            ("u(0)", 0, 0.0),
            ("u(L)", 0, BEAM_LENGTH),
            ("u_xx(0)", 2, 0.0),
            ("u_xx(L)", 2, BEAM_LENGTH),
        )
    )

    def solve(realization: np.ndarray):
        solution = fd_beam(
            lambda x: field_derivatives(stiffness, realization, x, 0),
            BEAM_LOAD,
            BEAM_LENGTH,
            fd_nodes,
        )
        return lambda pts: solution.interpolate(pts[:, 0])

    return ProblemDef(
        name="beam_kl",
        input=spec,
        pde=pde,
        boundary=boundary,
        reference=RealizationReference(tuple(range(1, n_modes + 1)), solve),
        defaults=ProblemDefaults(p=10, q=0.7, n_V=1000, n_BC=400),
        fields={"stiffness": stiffness},
        description="Simply supported beam with KL-expanded random bending stiffness",
    )


HEAT_KL_DIFFUSIVITY = 0.01


def problem_heat_kl_source(
    n_modes: int = 4,
    grid_nodes: int = 64,
    fd_nx: int = 100,
    fd_dt: float = 1e-3,
    train_fields: int = 10,
) -> ProblemDef:
    """
    Heat equation driven by a zero-mean KL source field (std 0.05, l_c 0.2).

    Training data are FD grid-node values drawn without replacement from
    train_fields seeded source realizations.
    """
    axis = uniform_grid(0.0, 1.0, grid_nodes)
    source = kl_decompose(Kernel(correlation_length=0.2, std=0.05), (axis, axis), target=int(n_modes))
    germs = [GaussianRandom(f"xi{i + 1}", 0.0, 1.0) for i in range(n_modes)]
    spec = _heat_spec(germs)
    germ_cols = slice(3, 3 + n_modes)
    settings = FDHeatSettings(nx=fd_nx, ny=fd_nx, dt=fd_dt, boundary=HeatBoundary.DIRICHLET)

    def source_rhs(p: np.ndarray) -> np.ndarray:
        return realize(source, p[:, germ_cols], p[:, :2])

    def solve_field(realization: np.ndarray):
        def f(X, Y):
            nodes = np.column_stack([X.ravel(), Y.ravel()])
            return realize(source, realization, nodes).reshape(X.shape)

        return fd_heat(
            settings,
            HEAT_KL_DIFFUSIVITY,
            lambda X, Y: np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y),
            f,
        )

    def solve(realization: np.ndarray):
        solution = solve_field(realization)
        return lambda pts: solution.interpolate(pts[:, :3])

    def training_data(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if n <= 0:
            return np.zeros((0, spec.dim)), np.zeros(0)
        realizations = source.sample_germs(rng, train_fields)
        points, values = [], []
        for k, n_k in enumerate(np.diff(np.linspace(0, n, train_fields + 1).round().astype(int))):
            solution = solve_field(realizations[k])
            grid = solution.values
            picks = rng.choice(grid.size, size=int(n_k), replace=False)
            it, ix, iy = np.unravel_index(picks, grid.shape)
            pts = np.column_stack([
                solution.x[ix],
                solution.y[iy],
                solution.times[it],
                np.broadcast_to(realizations[k], (int(n_k), n_modes)),
            ])
            points.append(pts)
            values.append(grid[it, ix, iy])
        return np.vstack(points), np.concatenate(values)

    return ProblemDef(
        name="heat_kl_source",
        input=spec,
        pde=_heat_operator(spec, -HEAT_KL_DIFFUSIVITY, source_rhs),
        boundary=_facet_conditions(spec, neumann=False),
        initial=_initial_condition(spec, _dirichlet_ic),
        reference=RealizationReference(tuple(range(3, 3 + n_modes)), solve),
        defaults=ProblemDefaults(p=8, q=0.75, n_V=400, n_BC=200, n_init=400, n_train=1000),
        training_data=training_data,
        fields={"source": source},
        description="2D heat equation with a KL-expanded random source",
    )


PROBLEMS: dict[str, Callable[..., ProblemDef]] = {
    "toy_beam": problem_toy_beam,
    "heat_dirichlet": problem_heat_dirichlet,
    "heat_neumann": problem_heat_neumann,
    "beam_kl": problem_beam_kl,
    "heat_kl_source": problem_heat_kl_source,
}


def get_problem(name: str, **options) -> ProblemDef:
    """Build a registered problem by name."""
    if name not in PROBLEMS:
        raise ProblemError(f"Unknown problem {name!r}; known: {sorted(PROBLEMS)}")
    try:
        return PROBLEMS[name](**options)
    except TypeError as exc:
        raise ProblemError(f"Invalid options for problem {name!r}: {exc}") from exc
