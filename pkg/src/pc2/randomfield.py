"""
Karhunen-Loeve expansion of stationary Gaussian random fields.

The covariance operator is discretized by Nystrom's method on a uniform
tensor grid with trapezoidal weights. The squared-exponential kernel
factorizes over coordinates, so a multi-axis grid is decomposed through one
small eigenproblem per axis and the modes are Kronecker products:

    lambda_(i,j) = sigma^2 mu_i^x mu_j^y,   phi_(i,j)(x, y) = phi_i^x(x) phi_j^y(y)

A realization is mean + sum_k sqrt(lambda_k) phi_k(s) xi_k with independent
standard normal germs xi_k.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg

from pc2.errors import Pc2Error

logger = logging.getLogger(__name__)


class RandomFieldError(Pc2Error):
    """Raised for invalid kernels, grids, truncation targets or queries."""
    pass


class KernelKind(Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"


@dataclass(frozen=True)
class Kernel:
    """C(s, s') = std^2 exp(-|s - s'|^2 / (2 l_c^2))."""
    correlation_length: float
    std: float = 1.0
    kind: KernelKind = KernelKind.SQUARED_EXPONENTIAL

    def __post_init__(self):
        if self.correlation_length <= 0:
            raise RandomFieldError(f"Correlation length must be > 0, got {self.correlation_length}")
        if self.std <= 0:
            raise RandomFieldError(f"Standard deviation must be > 0, got {self.std}")

    def correlation_1d(self, a: np.ndarray, b: np.ndarray, order: int = 0) -> np.ndarray:
        """Unit-variance factor exp(-(a-b)^2 / 2l^2) and its derivatives in a."""
        r = np.subtract.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        ell2 = self.correlation_length**2
        k = np.exp(-0.5 * r**2 / ell2)
        if order == 0:
            return k
        if order == 1:
            return -r / ell2 * k
        if order == 2:
            return (r**2 / ell2**2 - 1.0 / ell2) * k
        raise RandomFieldError(f"Kernel derivative order {order} is not supported")

    def covariance(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Covariance matrix between point sets of shape (n, d) and (m, d)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        t = np.atleast_2d(np.asarray(t, dtype=float))
        cov = np.full((s.shape[0], t.shape[0]), self.std**2)
        for d in range(s.shape[1]):
            cov *= self.correlation_1d(s[:, d], t[:, d])
        return cov


def uniform_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 2 or not lo < hi:
        raise RandomFieldError(f"Need n >= 2 and lo < hi, got n={n}, [{lo}, {hi}]")
    return np.linspace(lo, hi, n)


def trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    h = np.diff(axis)
    w = np.zeros(axis.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _as_axes(grid) -> tuple[np.ndarray, ...]:
    if isinstance(grid, np.ndarray) and grid.ndim == 1:
        axes = (grid,)
    elif isinstance(grid, Sequence) and grid and all(np.ndim(g) == 0 for g in grid):
        axes = (np.asarray(grid, dtype=float),)
    else:
        axes = tuple(np.asarray(g, dtype=float) for g in grid)
    for axis in axes:
        if axis.ndim != 1 or axis.size < 2:
            raise RandomFieldError("Every grid axis needs at least 2 points")
        if np.any(np.diff(axis) <= 0):
            raise RandomFieldError("Grid axes must be strictly increasing")
    return axes


# =============================================================================
# Decomposition
# =============================================================================

@dataclass(frozen=True, eq=False)
class KLField:
    """Truncated KL representation on a tensor grid."""
    kernel: Kernel
    mean: float
    axes: tuple[np.ndarray, ...]
    axis_weights: tuple[np.ndarray, ...]
    axis_eigvals: tuple[np.ndarray, ...]
    axis_eigvecs: tuple[np.ndarray, ...]
    mode_index: np.ndarray
    eigvals: np.ndarray
    total_variance: float

    @property
    def n_modes(self) -> int:
        return self.eigvals.size

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def variance_fraction(self) -> float:
        return float(self.eigvals.sum() / self.total_variance)

    @property
    def nodes(self) -> np.ndarray:
        """Grid nodes, first axis varying slowest, shape (n_nodes, dim)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(1)
        for aw in self.axis_weights:
            w = np.kron(w, aw)
        return w

    @property
    def eigvecs(self) -> np.ndarray:
        """Discretized eigenfunctions at the nodes, shape (n_nodes, n_modes)."""
        columns = []
        for idx in self.mode_index:
            col = np.ones(1)
            for d, i in enumerate(idx):
                col = np.kron(col, self.axis_eigvecs[d][:, i])
            columns.append(col)
        return np.column_stack(columns)

    def truncated_covariance(self) -> np.ndarray:
        """sum_k lambda_k phi_k phi_k^T on the grid nodes."""
        phi = self.eigvecs
        return (phi * self.eigvals) @ phi.T

    def sample_germs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.n_modes))


def _axis_eigenpairs(kernel: Kernel, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = trapezoid_weights(axis)
    sw = np.sqrt(w)
    B = sw[:, None] * kernel.correlation_1d(axis, axis) * sw[None, :]
    mu, v = scipy.linalg.eigh(B)
    mu, v = mu[::-1], v[:, ::-1]

    if mu[-1] < -1e-10 * mu[0]:
        raise RandomFieldError(
            f"Discretized kernel is not positive semidefinite (eigenvalue {mu[-1]:.3e})"
        )
    if mu[-1] < 0:
        logger.debug("Clipped %d negative eigenvalues", int(np.sum(mu < 0)))
    mu = np.clip(mu, 0.0, None)
    return w, mu, v / sw[:, None]


def kl_decompose(
    kernel: Kernel,
    grid,
    target: float | int = 0.99,
    mean: float = 0.0,
) -> KLField:
    """
    Solve the discrete KL eigenproblem and truncate.

    Args:
        kernel: Covariance kernel
        grid: One axis (1-D array) or a sequence of axes for a tensor grid
        target: A float in (0, 1] keeps the fewest modes reaching that
            fraction of the total variance; an int keeps that many modes
        mean: Constant field mean

    Returns:
        KLField with eigenvalues in non-increasing order
    """
    axes = _as_axes(grid)
    if isinstance(target, bool) or not isinstance(target, (int, float, np.integer, np.floating)):
        raise RandomFieldError(f"Invalid truncation target: {target!r}")

    weights, eigvals, eigvecs = zip(*(_axis_eigenpairs(kernel, a) for a in axes))

    products = np.ones(1)
    for mu in eigvals:
        products = np.multiply.outer(products, mu)
    products = kernel.std**2 * products.reshape(-1)
    shape = tuple(mu.size for mu in eigvals)
    order = np.argsort(-products, kind="stable")
    total = float(products.sum())

    if isinstance(target, (int, np.integer)):
        n_modes = int(target)
        if not 1 <= n_modes <= products.size:
            raise RandomFieldError(f"Mode count must lie in [1, {products.size}], got {n_modes}")
    else:
        if not 0.0 < target <= 1.0:
            raise RandomFieldError(f"Variance fraction must lie in (0, 1], got {target}")
        cumulative = np.cumsum(products[order]) / total
        n_modes = int(np.searchsorted(cumulative, target - 1e-12) + 1)
        n_modes = min(n_modes, products.size)

    kept = order[:n_modes]
    mode_index = np.column_stack(np.unravel_index(kept, shape))
    field = KLField(
        kernel=kernel,
        mean=float(mean),
        axes=axes,
        axis_weights=tuple(weights),
        axis_eigvals=tuple(eigvals),
        axis_eigvecs=tuple(eigvecs),
        mode_index=mode_index,
        eigvals=products[kept],
        total_variance=total,
    )
    logger.info(
        "KL expansion kept %d modes carrying %.4f of the variance", n_modes, field.variance_fraction
    )
    return field


# =============================================================================
# Realization
# =============================================================================

def _query_points(field: KLField, query) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    if field.dim == 1 and q.ndim <= 1:
        q = q.reshape(-1, 1)
    q = np.atleast_2d(q)
    if q.shape[1] != field.dim:
        raise RandomFieldError(f"Query points need {field.dim} coordinates, got shape {q.shape}")
    for d, axis in enumerate(field.axes):
        span = axis[-1] - axis[0]
        if np.any(q[:, d] < axis[0] - 1e-9 * span) or np.any(q[:, d] > axis[-1] + 1e-9 * span):
            raise RandomFieldError(f"Query coordinate {d} lies outside [{axis[0]}, {axis[-1]}]")
        q[:, d] = np.clip(q[:, d], axis[0], axis[-1])
    return q


def _germ_matrix(field: KLField, xi, n_query: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        if xi.size != field.n_modes:
            raise RandomFieldError(f"Expected {field.n_modes} germs, got {xi.size}")
        return np.broadcast_to(xi, (n_query, field.n_modes))
    if xi.shape != (n_query, field.n_modes):
        raise RandomFieldError(
            f"Germ matrix must have shape ({n_query}, {field.n_modes}), got {xi.shape}"
        )
    return xi


def _combine(field: KLField, modes: np.ndarray, xi, n_query: int) -> np.ndarray:
    germs = _germ_matrix(field, xi, n_query)
    return np.sum(modes * np.sqrt(field.eigvals) * germs, axis=1)


def realize(field: KLField, xi, query) -> np.ndarray:
    """
    Field values at query points, interpolating eigenfunctions linearly between nodes.

    Args:
        field: Decomposed field
        xi: Germs, one vector (n_modes,) or one per query point (n, n_modes)
        query: Points inside the grid domain, shape (n, dim)
    """
    q = _query_points(field, query)
    modes = np.ones((q.shape[0], field.n_modes))
    for d, axis in enumerate(field.axes):
        phi = field.axis_eigvecs[d]
        for k, i in enumerate(field.mode_index[:, d]):
            modes[:, k] *= np.interp(q[:, d], axis, phi[:, i])
    return field.mean + _combine(field, modes, xi, q.shape[0])


def field_derivatives(field: KLField, xi, query, order: int) -> np.ndarray:
    """
    Nystrom-interpolated field value (order 0) or derivative (orders 1, 2).

    The eigenfunctions are extended off the grid through the analytic kernel,
    phi(s) = (1 / mu) sum_j w_j k(s, s_j) phi(s_j), and differentiated
    through the kernel. One-dimensional fields only.
    """
    if field.dim != 1:
        raise RandomFieldError("Field derivatives are only available for 1-D fields")
    if order not in (0, 1, 2):
        raise RandomFieldError(f"Derivative order must be 0, 1 or 2, got {order}")
    q = _query_points(field, query)[:, 0]

    axis, w = field.axes[0], field.axis_weights[0]
    mu = field.axis_eigvals[0]
    phi = field.axis_eigvecs[0]
    idx = field.mode_index[:, 0]
    if np.any(mu[idx] <= 0):
        raise RandomFieldError("Cannot extend modes with zero eigenvalue")

    k = field.kernel.correlation_1d(q, axis, order)
    modes = (k * w) @ (phi[:, idx] / mu[idx])
    values = _combine(field, modes, xi, q.size)
    return values + field.mean if order == 0 else values
