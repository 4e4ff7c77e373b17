"""
Polynomial basis for physics-informed polynomial chaos expansions.

Every input dimension (spatial coordinate, time, or random parameter) is
mapped to a standardized germ and paired with an orthonormal polynomial
family (Wiener-Askey scheme):

    DeterministicInterval / UniformRandom  ->  germ in [-1, 1]  ->  Legendre
    GaussianRandom                         ->  standard normal  ->  Hermite

A multivariate basis function is the tensor product of univariate
polynomials selected by a multi-index; design matrices hold the basis (or
any of its physical-coordinate derivatives) evaluated at a list of points.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from pc2.errors import Pc2Error


class BasisError(Pc2Error):
    """Raised for invalid basis definitions or out-of-support evaluations."""
    pass


# =============================================================================
# Enums
# =============================================================================

class PolynomialFamily(Enum):
    """Orthonormal polynomial families paired with germ distributions."""
    LEGENDRE = "legendre"
    HERMITE = "hermite"


class MarginalKind(Enum):
    """Kinds of input dimensions."""
    DETERMINISTIC = "deterministic"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


# =============================================================================
# Univariate orthonormal polynomials
# =============================================================================

def _recurrence_coefficients(family: PolynomialFamily, max_degree: int) -> np.ndarray:
    """Coefficients b_n of x psi_n = b_{n+1} psi_{n+1} + b_n psi_{n-1}."""
    n = np.arange(1, max_degree + 2, dtype=float)
    b = np.zeros(max_degree + 2)
    if family is PolynomialFamily.LEGENDRE:
        b[1:] = n / np.sqrt(4.0 * n**2 - 1.0)
    else:
        b[1:] = np.sqrt(n)
    return b


def _as_family(family: PolynomialFamily | str) -> PolynomialFamily:
    if isinstance(family, PolynomialFamily):
        return family
    try:
        return PolynomialFamily(str(family).lower())
    except ValueError:
        raise BasisError(f"Unknown polynomial family: {family!r}") from None


def univariate_table(
    family: PolynomialFamily | str,
    max_degree: int,
    xi: np.ndarray | float,
    d: int = 0,
) -> np.ndarray:
    """
    Evaluate psi_0 .. psi_max_degree (or their d-th derivatives) at xi.

    Values come from the orthonormal three-term recurrence; derivatives from
    the same recurrence differentiated d times, so the result is exact for
    polynomials up to roundoff.

    Returns:
        Array of shape (len(xi), max_degree + 1)
    """
    family = _as_family(family)
    if max_degree < 0:
        raise BasisError(f"Polynomial degree must be >= 0, got {max_degree}")
    if d < 0:
        raise BasisError(f"Derivative order must be >= 0, got {d}")

    x = np.atleast_1d(np.asarray(xi, dtype=float)).ravel()
    b = _recurrence_coefficients(family, max_degree)

    lower: np.ndarray | None = None
    for k in range(d + 1):
        table = np.zeros((x.size, max_degree + 1))
        table[:, 0] = 1.0 if k == 0 else 0.0
        for n in range(max_degree):
            nxt = x * table[:, n]
            if k > 0:
                nxt = nxt + k * lower[:, n]
            if n > 0:
                nxt = nxt - b[n] * table[:, n - 1]
            table[:, n + 1] = nxt / b[n + 1]
        lower = table
    return lower


def eval_univariate(
    family: PolynomialFamily | str,
    n: int,
    d: int,
    xi: np.ndarray | float,
) -> np.ndarray | float:
    """
    Evaluate the d-th derivative of the degree-n orthonormal polynomial.

    Example:
        eval_univariate("legendre", 1, 0, 0.5) -> sqrt(3) * 0.5
    """
    if n < 0:
        raise BasisError(f"Polynomial degree must be >= 0, got {n}")
    values = univariate_table(family, n, xi, d)[:, n]
    if np.ndim(xi) == 0:
        return float(values[0])
    return values.reshape(np.shape(xi))


# =============================================================================
# Marginals (input dimensions)
# =============================================================================

@dataclass(frozen=True)
class Marginal(ABC):
    """Base class for one input dimension and its germ mapping."""
    name: str

    kind: MarginalKind = field(init=False, repr=False, default=MarginalKind.DETERMINISTIC)

    @property
    @abstractmethod
    def family(self) -> PolynomialFamily:
        """Polynomial family orthonormal under the germ measure."""
        pass

    @property
    @abstractmethod
    def is_random(self) -> bool:
        pass

    @property
    @abstractmethod
    def params(self) -> tuple[float, float]:
        """The two defining parameters (bounds or mean/std)."""
        pass

    @property
    @abstractmethod
    def germ_scale(self) -> float:
        """d xi / d x of the affine germ map."""
        pass

    @abstractmethod
    def to_germ(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def from_germ(self, xi: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n values from the dimension's distribution (uniform over intervals)."""
        pass


@dataclass(frozen=True)
class _IntervalMarginal(Marginal):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise BasisError(f"Bounds of {self.name!r} must be finite")
        if not self.lo < self.hi:
            raise BasisError(f"Interval {self.name!r} needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def family(self) -> PolynomialFamily:
        return PolynomialFamily.LEGENDRE

    @property
    def params(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def germ_scale(self) -> float:
        return 2.0 / (self.hi - self.lo)

    def to_germ(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def from_germ(self, xi: np.ndarray) -> np.ndarray:
        return self.lo + 0.5 * (np.asarray(xi, dtype=float) + 1.0) * (self.hi - self.lo)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)


@dataclass(frozen=True)
class DeterministicInterval(_IntervalMarginal):
    """A spatial or temporal coordinate on [lo, hi]."""
    kind: MarginalKind = field(init=False, repr=False, default=MarginalKind.DETERMINISTIC)

    @property
    def is_random(self) -> bool:
        return False


@dataclass(frozen=True)
class UniformRandom(_IntervalMarginal):
    """A random parameter uniformly distributed on [lo, hi]."""
    kind: MarginalKind = field(init=False, repr=False, default=MarginalKind.UNIFORM)

    @property
    def is_random(self) -> bool:
        return True


@dataclass(frozen=True)
class GaussianRandom(Marginal):
    """A random parameter ~ N(mean, std^2)."""
    mean: float = 0.0
    std: float = 1.0
    kind: MarginalKind = field(init=False, repr=False, default=MarginalKind.GAUSSIAN)

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise BasisError(f"Parameters of {self.name!r} must be finite")
        if self.std <= 0:
            raise BasisError(f"Gaussian {self.name!r} needs std > 0, got {self.std}")

    @property
    def family(self) -> PolynomialFamily:
        return PolynomialFamily.HERMITE

    @property
    def is_random(self) -> bool:
        return True

    @property
    def params(self) -> tuple[float, float]:
        return (self.mean, self.std)

    @property
    def germ_scale(self) -> float:
        return 1.0 / self.std

    def to_germ(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def from_germ(self, xi: np.ndarray) -> np.ndarray:
        return self.mean + self.std * np.asarray(xi, dtype=float)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=n)


_MARGINAL_CLASSES: dict[MarginalKind, type[Marginal]] = {
    MarginalKind.DETERMINISTIC: DeterministicInterval,
    MarginalKind.UNIFORM: UniformRandom,
    MarginalKind.GAUSSIAN: GaussianRandom,
}


def make_marginal(kind: MarginalKind | str, name: str, a: float, b: float) -> Marginal:
    """Build a marginal from its kind and two parameters (bounds or mean/std)."""
    try:
        kind = MarginalKind(kind) if not isinstance(kind, MarginalKind) else kind
    except ValueError:
        raise BasisError(f"Unknown marginal kind: {kind!r}") from None
    return _MARGINAL_CLASSES[kind](name, float(a), float(b))


def germ_map(
    marginal: Marginal,
    x: np.ndarray | float,
    tol: float = 1e-9,
) -> tuple[np.ndarray | float, float]:
    """
    Map physical values to germ values.

    Returns:
        (xi, scale) where scale = d xi / d x. A d-th physical derivative of
        a basis function picks up the factor scale**d.

    Raises:
        BasisError: if an interval value lies outside [lo, hi] by more than
            tol * (hi - lo). Values within the tolerance are clipped.
    """
    xi = marginal.to_germ(x)
    if isinstance(marginal, _IntervalMarginal):
        slack = 2.0 * tol
        if np.any(xi < -1.0 - slack) or np.any(xi > 1.0 + slack):
            raise BasisError(
                f"Value outside [{marginal.lo}, {marginal.hi}] for dimension {marginal.name!r}"
            )
        xi = np.clip(xi, -1.0, 1.0)
    if np.ndim(x) == 0:
        xi = float(xi)
    return xi, marginal.germ_scale


# =============================================================================
# Input specification
# =============================================================================

@dataclass(frozen=True)
class InputSpec:
    """Ordered input dimensions; the order is shared by training, constraints and evaluation."""
    marginals: tuple[Marginal, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) < 1:
            raise BasisError("InputSpec needs at least one dimension")
        names = [m.name for m in self.marginals]
        if len(set(names)) != len(names):
            raise BasisError(f"Duplicate dimension names in {names}")

    def __len__(self) -> int:
        return len(self.marginals)

    def __iter__(self) -> Iterator[Marginal]:
        return iter(self.marginals)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.marginals]

    @property
    def random_dims(self) -> list[int]:
        return [i for i, m in enumerate(self.marginals) if m.is_random]

    @property
    def deterministic_dims(self) -> list[int]:
        return [i for i, m in enumerate(self.marginals) if not m.is_random]

    def index(self, name: str) -> int:
        """Position of a named dimension."""
        for i, m in enumerate(self.marginals):
            if m.name == name:
                return i
        raise BasisError(f"Unknown dimension {name!r}; known: {self.names}")

    def derivative_orders(self, **orders: int) -> tuple[int, ...]:
        """Per-dimension derivative tuple from name=order pairs, e.g. x=2, t=1."""
        deriv = [0] * self.dim
        for name, order in orders.items():
            if order < 0:
                raise BasisError(f"Derivative order for {name!r} must be >= 0")
            deriv[self.index(name)] = int(order)
        return tuple(deriv)


def as_points(points, dim: int) -> np.ndarray:
    """Coerce a point or list of points to a float array of shape (n, dim)."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, dim)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise BasisError(f"Points must have {dim} coordinates, got shape {arr.shape}")
    return arr


# =============================================================================
# Multi-indices
# =============================================================================

@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Retained multi-indices, one row per basis function, in canonical order."""
    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.int64)
        if arr.ndim != 2:
            raise BasisError("Multi-index array must be 2-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    def __len__(self) -> int:
        return self.array.shape[0]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return (tuple(int(a) for a in row) for row in self.array)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndexSet) and np.array_equal(self.array, other.array)

    @property
    def dim(self) -> int:
        return self.array.shape[1]

    @property
    def total_degrees(self) -> np.ndarray:
        return self.array.sum(axis=1)

    def position(self, alpha: tuple[int, ...]) -> int:
        """Column of a multi-index in the basis."""
        hits = np.flatnonzero(np.all(self.array == np.asarray(alpha), axis=1))
        if hits.size == 0:
            raise BasisError(f"Multi-index {alpha} is not in the set")
        return int(hits[0])


def q_norm(alpha, q: float) -> float:
    """Hyperbolic q-norm (sum alpha_i^q)^(1/q), with 0^q = 0."""
    return float(sum(float(a) ** q for a in alpha if a > 0) ** (1.0 / q)) if any(alpha) else 0.0


def canonical_order(indices: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Sort by total degree, then lexicographically with the first dimension varying slowest."""
    return sorted(indices, key=lambda a: (sum(a), tuple(-v for v in a)))


def gen_multi_indices(M: int, p: int, q: float = 1.0) -> MultiIndexSet:
    """
    Generate every alpha with ||alpha||_q <= p (hyperbolic truncation).

    q = 1 gives the total-degree set of cardinality C(M + p, p). A tie
    tolerance of 1e-12 * p absorbs roundoff in the q-norm.

    Example:
        gen_multi_indices(2, 2, 0.5) -> (0,0) (1,0) (0,1) (2,0) (0,2)
    """
    if M < 1:
        raise BasisError(f"Dimension must be >= 1, got {M}")
    if p < 0:
        raise BasisError(f"Order must be >= 0, got {p}")
    if not 0.0 < q <= 1.0:
        raise BasisError(f"Hyperbolic exponent must lie in (0, 1], got {q}")

    bound = (p + 1e-12 * p) ** q
    found: list[tuple[int, ...]] = []

    def extend(prefix: list[int], partial: float) -> None:
        if len(prefix) == M:
            found.append(tuple(prefix))
            return
        for a in range(p + 1):
            total = partial + (float(a) ** q if a > 0 else 0.0)
            if total > bound:
                break
            prefix.append(a)
            extend(prefix, total)
            prefix.pop()

    extend([], 0.0)
    return MultiIndexSet(np.array(canonical_order(found), dtype=np.int64).reshape(-1, M))


# =============================================================================
# Basis specification and design matrices
# =============================================================================

@dataclass(frozen=True)
class BasisSpec:
    """Polynomial order p, hyperbolic exponent q and the retained multi-indices."""
    input: InputSpec
    p: int
    q: float
    indices: MultiIndexSet

    def __post_init__(self):
        if self.indices.dim != self.input.dim:
            raise BasisError(
                f"Multi-indices have {self.indices.dim} dimensions, input has {self.input.dim}"
            )

    @classmethod
    def create(cls, input_spec: InputSpec, p: int, q: float = 1.0) -> "BasisSpec":
        return cls(input_spec, int(p), float(q), gen_multi_indices(input_spec.dim, p, q))

    @property
    def cardinality(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Basis functions (or a derivative of them) evaluated at a list of points."""
    basis: BasisSpec
    points: np.ndarray
    values: np.ndarray
    deriv: tuple[int, ...]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def build_design_matrix(
    basis: BasisSpec,
    points,
    deriv: tuple[int, ...] | None = None,
    tol: float = 1e-9,
) -> DesignMatrix:
    """
    Assemble Psi with entry (j, k) = prod_i psi^(d_i)_{alpha_k,i}(xi^j_i) * scale_i^d_i.

    Args:
        basis: The basis to evaluate
        points: Physical points, shape (n, M); n may be zero
        deriv: Per-dimension derivative orders (default: plain evaluation)
        tol: Relative tolerance for points on interval boundaries

    Returns:
        DesignMatrix whose rows follow the input point order
    """
    M = basis.input.dim
    pts = as_points(points, M)
    if deriv is None:
        deriv = (0,) * M
    deriv = tuple(int(d) for d in deriv)
    if len(deriv) != M:
        raise BasisError(f"Derivative orders must have {M} entries, got {len(deriv)}")
    if any(d < 0 for d in deriv):
        raise BasisError(f"Derivative orders must be >= 0, got {deriv}")

    values = np.ones((pts.shape[0], basis.cardinality))
    for i, marginal in enumerate(basis.input.marginals):
        degrees = basis.indices.array[:, i]
        if deriv[i] == 0 and degrees.max() == 0:
            continue
        xi, scale = germ_map(marginal, pts[:, i], tol)
        table = univariate_table(marginal.family, int(degrees.max()), xi, deriv[i])
        values *= table[:, degrees] * scale ** deriv[i]

    return DesignMatrix(basis=basis, points=pts, values=values, deriv=deriv)
