"""
Finite-difference reference solvers.

fd_heat: implicit Euler in time with the 5-point Laplacian on a uniform
node grid of the unit square. Dirichlet boundaries hold u = 0; Neumann
boundaries use mirrored ghost nodes (zero flux), which conserves the
trapezoid-weighted spatial mean exactly.

fd_beam: simply supported beam (EI u'')'' = q with u = u'' = 0 at both ends.
The moment M = EI u'' satisfies M'' = q with M = 0 at the supports, so
the fourth-order problem splits into a closed-form moment and one
tridiagonal second-order solve for u.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.interpolate import RegularGridInterpolator

from pc2.errors import Pc2Error

logger = logging.getLogger(__name__)


class FiniteDifferenceError(Pc2Error):
    """Raised for invalid grids, time steps or coefficients."""
    pass


class HeatBoundary(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class FDHeatSettings:
    """Grid and time stepping for fd_heat."""
    nx: int = 200
    ny: int = 200
    dt: float = 1e-4
    t_end: float = 1.0
    boundary: HeatBoundary = HeatBoundary.DIRICHLET
    n_snapshots: int = 101

    def __post_init__(self):
        object.__setattr__(self, "boundary", HeatBoundary(self.boundary))
        if self.nx < 4 or self.ny < 4:
            raise FiniteDifferenceError(f"Need at least 4 nodes per axis, got {self.nx}x{self.ny}")
        if self.dt <= 0 or self.t_end <= 0:
            raise FiniteDifferenceError("Time step and end time must be positive")
        if self.n_snapshots < 2:
            raise FiniteDifferenceError("Need at least 2 snapshots")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass(frozen=True, eq=False)
class HeatSolution:
    """Snapshots u[t_k, x_i, y_j] with trilinear access."""
    x: np.ndarray
    y: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def interpolate(self, points) -> np.ndarray:
        """Values at (x, y, t) points, clamped to the grid hull."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        query = np.column_stack([
            np.clip(pts[:, 2], self.times[0], self.times[-1]),
            np.clip(pts[:, 0], self.x[0], self.x[-1]),
            np.clip(pts[:, 1], self.y[0], self.y[-1]),
        ])
        interp = RegularGridInterpolator((self.times, self.x, self.y), self.values, method="linear")
        return interp(query)

    def spatial_mean(self, k: int) -> float:
        """Trapezoid-weighted spatial mean of snapshot k."""
        wx = _trapezoid(self.x)
        wy = _trapezoid(self.y)
        return float(wx @ self.values[k] @ wy / (wx.sum() * wy.sum()))


def _trapezoid(axis: np.ndarray) -> np.ndarray:
    h = np.diff(axis)
    w = np.zeros(axis.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _laplacian_1d(n: int, h: float, boundary: HeatBoundary) -> scipy.sparse.csr_matrix:
    """Second-difference matrix on the unknowns of one axis."""
    if boundary is HeatBoundary.DIRICHLET:
        m = n - 2
        main = -2.0 * np.ones(m)
        off = np.ones(m - 1)
        return scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h**2
    main = -2.0 * np.ones(n)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    # Ghost nodes mirror the first interior node.
    upper[0] = 2.0
    lower[-1] = 2.0
    return scipy.sparse.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def fd_heat(
    settings: FDHeatSettings,
    diffusivity: float,
    initial: Callable[[np.ndarray, np.ndarray], np.ndarray],
    source: np.ndarray | Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> HeatSolution:
    """
    Solve u_t = D (u_xx + u_yy) + f on [0, 1]^2 x [0, t_end].

    Args:
        settings: Grid, time step and boundary type
        diffusivity: D >= 0; D = 0 freezes the initial state
        initial: u(x, y, 0) evaluated on meshgrid arrays
        source: Time-independent f on the node grid (array or callable)

    Returns:
        HeatSolution with n_snapshots evenly spaced time levels
    """
    if diffusivity < 0 or not np.isfinite(diffusivity):
        raise FiniteDifferenceError(f"Diffusivity must be finite and >= 0, got {diffusivity}")

    x = np.linspace(0.0, 1.0, settings.nx)
    y = np.linspace(0.0, 1.0, settings.ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    u = np.asarray(initial(X, Y), dtype=float).copy()
    if source is None:
        f = np.zeros_like(u)
    elif callable(source):
        f = np.asarray(source(X, Y), dtype=float)
    else:
        f = np.asarray(source, dtype=float)
    if f.shape != u.shape:
        raise FiniteDifferenceError(f"Source has shape {f.shape}, grid is {u.shape}")

    dirichlet = settings.boundary is HeatBoundary.DIRICHLET
    inner = (slice(1, -1), slice(1, -1)) if dirichlet else (slice(None), slice(None))
    if dirichlet:
        u[0, :] = u[-1, :] = u[:, 0] = u[:, -1] = 0.0

    Lx = _laplacian_1d(settings.nx, x[1] - x[0], settings.boundary)
    Ly = _laplacian_1d(settings.ny, y[1] - y[0], settings.boundary)
    Ix = scipy.sparse.identity(Lx.shape[0], format="csr")
    Iy = scipy.sparse.identity(Ly.shape[0], format="csr")
    laplacian = scipy.sparse.kron(Lx, Iy) + scipy.sparse.kron(Ix, Ly)
    system = scipy.sparse.identity(laplacian.shape[0]) - settings.dt * diffusivity * laplacian
    solver = scipy.sparse.linalg.splu(system.tocsc())

    n_steps = settings.n_steps
    save_at = np.unique(np.round(np.linspace(0, n_steps, settings.n_snapshots)).astype(int))
    snapshots = [u.copy()]
    state = u[inner].ravel()
    forcing = settings.dt * f[inner].ravel()
    next_save = 1
    for step in range(1, n_steps + 1):
        state = solver.solve(state + forcing)
        if step == save_at[next_save]:
            frame = np.zeros_like(u)
            frame[inner] = state.reshape(u[inner].shape)
            snapshots.append(frame)
            next_save += 1

    times = save_at * settings.dt
    logger.info(
        "FD heat solve: %dx%d nodes, %d steps, boundary=%s",
        settings.nx, settings.ny, n_steps, settings.boundary.value,
    )
    return HeatSolution(x=x, y=y, times=times, values=np.stack(snapshots))


# =============================================================================
# Beam
# =============================================================================

@dataclass(frozen=True, eq=False)
class BeamSolution:
    x: np.ndarray
    u: np.ndarray

    def interpolate(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.x, self.u)


def fd_beam(
    stiffness: np.ndarray | Callable[[np.ndarray], np.ndarray],
    load: float,
    length: float,
    n_nodes: int = 1001,
) -> BeamSolution:
    """
    Deflection of a simply supported beam under a uniform load.

    Args:
        stiffness: EI at the nodes, or a callable of x
        load: Uniform distributed load q in (EI u'')'' = q
        length: Beam length L
        n_nodes: Node count including both supports
    """
    if n_nodes < 3 or length <= 0:
        raise FiniteDifferenceError(f"Need n_nodes >= 3 and length > 0, got {n_nodes}, {length}")
    x = np.linspace(0.0, length, n_nodes)
    EI = np.asarray(stiffness(x) if callable(stiffness) else stiffness, dtype=float)
    if EI.shape != x.shape:
        raise FiniteDifferenceError(f"Stiffness has shape {EI.shape}, expected {x.shape}")
    if np.any(EI <= 0):
        raise FiniteDifferenceError("Bending stiffness must be positive everywhere")

    h = x[1] - x[0]
    moment = 0.5 * load * x * (x - length)
    curvature = moment[1:-1] / EI[1:-1]

    m = n_nodes - 2
    banded = np.zeros((3, m))
    banded[0, 1:] = 1.0
    banded[1, :] = -2.0
    banded[2, :-1] = 1.0
    u = np.zeros(n_nodes)
    u[1:-1] = scipy.linalg.solve_banded((1, 1), banded, h**2 * curvature)
    return BeamSolution(x=x, u=u)
