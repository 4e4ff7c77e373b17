"""
Linear differential operators and equality-constraint assembly.

A constraint row is the surrogate's response to a linear operator at one
point: row . beta = rhs. Operators are sums of terms coeff(point) * D^deriv,
so the row is the matching weighted sum of design-matrix derivative rows.

Rows are stacked PDE first, then BC, then IC:

    A = [ A_PDE ]   c = [ c_PDE ]
        [ A_BC  ]       [ c_BC  ]
        [ A_IC  ]       [ c_IC  ]
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from pc2.basis import BasisSpec, InputSpec, as_points, build_design_matrix
from pc2.errors import Pc2Error

logger = logging.getLogger(__name__)

# Pointwise function of an (n, M) point array returning n values (or a scalar).
PointFunction = Callable[[np.ndarray], np.ndarray | float]


class ConstraintError(Pc2Error):
    """Raised for malformed operators or failed coefficient evaluation."""
    pass


class EmptyConstraintSetError(ConstraintError):
    """Raised when assembly is asked to build zero constraint rows."""
    pass


class ConstraintTag(Enum):
    """Origin of a constraint row."""
    PDE = "PDE"
    BC = "BC"
    IC = "IC"


_TAG_ORDER = {ConstraintTag.PDE: 0, ConstraintTag.BC: 1, ConstraintTag.IC: 2}


def _evaluate(fn: PointFunction | float, points: np.ndarray, what: str) -> np.ndarray:
    """Evaluate a coefficient or rhs at every point, broadcasting scalars."""
    n = points.shape[0]
    if callable(fn):
        try:
            values = fn(points)
        except Exception as exc:
            raise ConstraintError(f"Failed to evaluate {what}: {exc}") from exc
    else:
        values = fn
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(n, float(values))
    values = values.reshape(-1)
    if values.size != n:
        raise ConstraintError(f"{what} returned {values.size} values for {n} points")
    if not np.all(np.isfinite(values)):
        raise ConstraintError(f"{what} returned non-finite values")
    return values


# =============================================================================
# Operators
# =============================================================================

@dataclass(frozen=True)
class OperatorTerm:
    """coeff(point) times the deriv-th partial derivative of the surrogate."""
    coeff: PointFunction | float
    deriv: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "deriv", tuple(int(d) for d in self.deriv))
        if any(d < 0 for d in self.deriv):
            raise ConstraintError(f"Derivative orders must be >= 0, got {self.deriv}")


@dataclass(frozen=True)
class LinearOperator:
    """Sum of operator terms with a pointwise right-hand side."""
    terms: tuple[OperatorTerm, ...]
    rhs: PointFunction | float = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ConstraintError("A linear operator needs at least one term")
        dims = {len(t.deriv) for t in self.terms}
        if len(dims) != 1:
            raise ConstraintError(f"Operator terms disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return len(self.terms[0].deriv)

    @classmethod
    def identity(cls, dim: int, rhs: PointFunction | float = 0.0, name: str = "u") -> "LinearOperator":
        return cls((OperatorTerm(1.0, (0,) * dim),), rhs, name)


class OperatorBuilder:
    """
    Fluent builder naming derivatives by input dimension.

    Example:
        >>> heat = (
        ...     OperatorBuilder(spec, "heat")
        ...     .term(1.0, t=1)
        ...     .term(lambda pts: -pts[:, 3], x=2)
        ...     .term(lambda pts: -pts[:, 3], y=2)
        ...     .rhs(0.0)
        ...     .build()
        ... )
    """

    def __init__(self, input_spec: InputSpec, name: str = ""):
        self._input = input_spec
        self._name = name
        self._terms: list[OperatorTerm] = []
        self._rhs: PointFunction | float = 0.0

    def term(self, coeff: PointFunction | float = 1.0, **orders: int) -> "OperatorBuilder":
        try:
            deriv = self._input.derivative_orders(**orders)
        except Pc2Error as exc:
            raise ConstraintError(str(exc)) from exc
        self._terms.append(OperatorTerm(coeff, deriv))
        return self

    def value(self, coeff: PointFunction | float = 1.0) -> "OperatorBuilder":
        """Add the undifferentiated surrogate."""
        return self.term(coeff)

    def rhs(self, rhs: PointFunction | float) -> "OperatorBuilder":
        self._rhs = rhs
        return self

    def build(self) -> LinearOperator:
        return LinearOperator(tuple(self._terms), self._rhs, self._name)


# =============================================================================
# Row evaluation
# =============================================================================

def apply_operator_rows(
    op: LinearOperator,
    basis: BasisSpec,
    points,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Evaluate an operator on the basis at many points.

    Returns:
        (rows, rhs) of shapes (n, cardinality) and (n,), rows in point order
    """
    if op.dim != basis.input.dim:
        raise ConstraintError(
            f"Operator {op.name or '<unnamed>'} has {op.dim} dimensions, basis has {basis.input.dim}"
        )
    pts = as_points(points, basis.input.dim)
    rows = np.zeros((pts.shape[0], basis.cardinality))

    # Terms sharing a derivative reuse one design matrix.
    by_deriv: dict[tuple[int, ...], np.ndarray] = {}
    for term in op.terms:
        coeff = _evaluate(term.coeff, pts, f"coefficient of {op.name or 'operator'}")
        if not np.any(coeff):
            continue
        if term.deriv not in by_deriv:
            by_deriv[term.deriv] = build_design_matrix(basis, pts, term.deriv).values
        rows += coeff[:, None] * by_deriv[term.deriv]

    rhs = _evaluate(op.rhs, pts, f"right-hand side of {op.name or 'operator'}")
    return rows, rhs


def apply_operator_row(
    op: LinearOperator,
    basis: BasisSpec,
    point,
) -> tuple[np.ndarray, float]:
    """Single-point form of apply_operator_rows."""
    rows, rhs = apply_operator_rows(op, basis, as_points(point, basis.input.dim)[:1])
    return rows[0], float(rhs[0])


# =============================================================================
# Constraint sets
# =============================================================================

@dataclass(frozen=True, eq=False)
class ConstraintBlock:
    """One operator enforced at a list of points."""
    operator: LinearOperator
    points: np.ndarray
    tag: ConstraintTag = ConstraintTag.PDE


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Stacked constraint matrix A, right-hand side c and per-row tags."""
    A: np.ndarray
    c: np.ndarray
    tags: tuple[ConstraintTag, ...]
    points: np.ndarray

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape[0] != self.c.shape[0]:
            raise ConstraintError(f"A {self.A.shape} and c {self.c.shape} do not match")
        if len(self.tags) != self.A.shape[0]:
            raise ConstraintError("One tag per constraint row is required")

    @classmethod
    def empty(cls, basis: BasisSpec) -> "ConstraintSet":
        """A set with no rows, for unconstrained fits."""
        return cls(
            A=np.zeros((0, basis.cardinality)),
            c=np.zeros(0),
            tags=(),
            points=np.zeros((0, basis.input.dim)),
        )

    def __len__(self) -> int:
        return self.A.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.A.shape[0] == 0

    def mask(self, tag: ConstraintTag) -> np.ndarray:
        return np.array([t is tag for t in self.tags], dtype=bool)

    def count(self, tag: ConstraintTag) -> int:
        return int(self.mask(tag).sum())

    def residual(self, beta: np.ndarray) -> np.ndarray:
        return self.A @ beta - self.c


def assemble(
    blocks: Iterable[ConstraintBlock | tuple],
    basis: BasisSpec,
    normalize_rows: bool = False,
) -> ConstraintSet:
    """
    Stack operator rows into one constraint set.

    Blocks may be ConstraintBlock instances or (operator, points, tag)
    tuples. Blocks with no points are skipped. Rows are ordered PDE, BC, IC;
    within a tag, blocks keep their given order and rows their point order.

    Args:
        blocks: Operators with the points they are enforced at
        basis: Basis the rows are evaluated on
        normalize_rows: Scale every row (and its rhs) to unit l2 norm

    Raises:
        EmptyConstraintSetError: if no block contributes a row
    """
    normalized = [b if isinstance(b, ConstraintBlock) else ConstraintBlock(*b) for b in blocks]
    ordered = sorted(
        (b for b in normalized if as_points(b.points, basis.input.dim).shape[0] > 0),
        key=lambda b: _TAG_ORDER[b.tag],
    )
    if not ordered:
        raise EmptyConstraintSetError("No constraint points were supplied")

    A_parts, c_parts, pts_parts = [], [], []
    tags: list[ConstraintTag] = []
    for block in ordered:
        pts = as_points(block.points, basis.input.dim)
        rows, rhs = apply_operator_rows(block.operator, basis, pts)
        A_parts.append(rows)
        c_parts.append(rhs)
        pts_parts.append(pts)
        tags.extend([block.tag] * pts.shape[0])

    A = np.vstack(A_parts)
    c = np.concatenate(c_parts)
    if normalize_rows:
        norms = np.linalg.norm(A, axis=1)
        norms[norms == 0.0] = 1.0
        A = A / norms[:, None]
        c = c / norms

    constraints = ConstraintSet(A=A, c=c, tags=tuple(tags), points=np.vstack(pts_parts))
    logger.info(
        "Assembled %d constraints (PDE=%d, BC=%d, IC=%d) on %d basis functions",
        constraints.n_constraints,
        constraints.count(ConstraintTag.PDE),
        constraints.count(ConstraintTag.BC),
        constraints.count(ConstraintTag.IC),
        basis.cardinality,
    )
    return constraints
