"""
Point generation and D-optimal selection of virtual points.

Virtual points are drawn at random, or drawn k-fold oversampled and reduced
to the most informative subset: the right singular vectors of the transposed
candidate matrix are ranked by QR factorization with column pivoting, and
rows beyond the rank are added greedily by log-determinant gain. Boundary
and initial points are always random.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from pc2.basis import BasisSpec, InputSpec, build_design_matrix
from pc2.constraints import apply_operator_rows
from pc2.errors import Pc2Error

if TYPE_CHECKING:
    from pc2.problems import ProblemDef

logger = logging.getLogger(__name__)


class SamplingError(Pc2Error):
    """Raised for invalid sample plans or selection requests."""
    pass


class SamplingStrategy(Enum):
    RANDOM = "random"
    DOPTIMAL = "doptimal"


class CandidateRows(Enum):
    """What a candidate point contributes to the D-optimal candidate matrix."""
    OPERATOR = "operator"
    BASIS = "basis"


RngLike = np.random.Generator | int | None


def _rng(seed: RngLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True)
class SamplePlan:
    """
    Point counts and the virtual-point strategy.

    n_IC counts initial points enforced as hard constraints, n_init initial
    points used as soft data.
    """
    n_V: int
    n_BC: int = 0
    n_IC: int = 0
    n_init: int = 0
    strategy: SamplingStrategy = SamplingStrategy.RANDOM
    oversample_k: int = 3
    seed: int = 0
    candidate_rows: CandidateRows = CandidateRows.OPERATOR

    def __post_init__(self):
        for name in ("n_V", "n_BC", "n_IC", "n_init"):
            if getattr(self, name) < 0:
                raise SamplingError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.oversample_k < 1:
            raise SamplingError(f"oversample_k must be >= 1, got {self.oversample_k}")
        object.__setattr__(self, "strategy", SamplingStrategy(self.strategy))
        object.__setattr__(self, "candidate_rows", CandidateRows(self.candidate_rows))

    @property
    def candidate_count(self) -> int:
        return self.oversample_k * self.n_V


@dataclass(frozen=True, eq=False)
class PointPlan:
    """Points for one training run."""
    virtual: np.ndarray
    boundary: tuple[np.ndarray, ...]
    initial: np.ndarray
    init_data: np.ndarray

    @property
    def n_boundary(self) -> int:
        return sum(b.shape[0] for b in self.boundary)


# =============================================================================
# Random sampling
# =============================================================================

def sample_random(spec: InputSpec, n: int, seed: RngLike = None) -> np.ndarray:
    """
    Draw n i.i.d. points: uniform over intervals, normal for Gaussian dimensions.

    Returns:
        Array of shape (n, M)
    """
    if n < 0:
        raise SamplingError(f"Sample count must be >= 0, got {n}")
    rng = _rng(seed)
    points = np.empty((n, spec.dim))
    for i, marginal in enumerate(spec.marginals):
        points[:, i] = marginal.sample(rng, n)
    return points


def sample_facet(
    spec: InputSpec,
    n: int,
    fixed: dict[str, float],
    seed: RngLike = None,
) -> np.ndarray:
    """Random points with some coordinates pinned, e.g. {"x": 0.0} or {"t": 0.0}."""
    points = sample_random(spec, n, seed)
    for name, value in fixed.items():
        points[:, spec.index(name)] = value
    return points


def split_count(n: int, parts: int) -> list[int]:
    """Spread n over parts as evenly as possible, earlier parts first."""
    if parts <= 0:
        return []
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


# =============================================================================
# D-optimal selection
# =============================================================================

def d_optimal_select(candidate_rows, n_V: int, rank_tol: float = 1e-12) -> np.ndarray:
    """
    Pick n_V rows of a candidate matrix by SVD plus pivoted QR.

    Args:
        candidate_rows: Matrix of shape (n_candidates, cardinality)
        n_V: Number of rows to keep
        rank_tol: Relative singular-value cutoff

    Returns:
        Ordered, duplicate-free candidate indices. Picks beyond the rank of
        the candidate matrix greedily maximize the log-determinant gain.
    """
    C = np.asarray(candidate_rows, dtype=float)
    if C.ndim != 2:
        raise SamplingError("Candidate matrix must be 2-dimensional")
    n_cand = C.shape[0]
    if n_V < 1:
        raise SamplingError(f"n_V must be >= 1, got {n_V}")
    if n_V > n_cand:
        raise SamplingError(f"Cannot select {n_V} of {n_cand} candidates")
    if not np.any(C):
        raise SamplingError("Candidate matrix is identically zero")

    _, s, Vt = scipy.linalg.svd(C.T, full_matrices=False)
    rank = max(1, int(np.count_nonzero(s > rank_tol * s[0])))
    V = Vt[:rank]

    _, _, piv = scipy.linalg.qr(V, pivoting=True, mode="economic")
    chosen = list(piv[:rank])
    if n_V <= rank:
        return np.asarray(chosen[:n_V], dtype=np.int64)

    # Greedy augmentation: adding row j multiplies det(M) by 1 + v_j^T M^{-1} v_j.
    # M^{-1} and the gains are kept current by rank-one updates.
    M_inv = np.linalg.inv(V[:, chosen] @ V[:, chosen].T)
    gain = np.einsum("ij,ik,kj->j", V, M_inv, V)
    gain[chosen] = -np.inf
    for _ in range(n_V - rank):
        j = int(np.argmax(gain))
        chosen.append(j)
        u = M_inv @ V[:, j] / np.sqrt(1.0 + gain[j])
        M_inv -= np.outer(u, u)
        gain -= (u @ V) ** 2
        gain[j] = -np.inf
    return np.asarray(chosen, dtype=np.int64)


def log_det_information(rows) -> float:
    """log det(R^T R) of a row subset; -inf when singular."""
    R = np.asarray(rows, dtype=float)
    sign, logdet = np.linalg.slogdet(R.T @ R)
    return float(logdet) if sign > 0 else float("-inf")


# =============================================================================
# Training plans
# =============================================================================

def plan_points(problem: "ProblemDef", plan: SamplePlan, basis: BasisSpec) -> PointPlan:
    """
    Draw virtual, boundary and initial points for a problem.

    Each point set uses its own child stream of the plan seed, so changing
    one count leaves the other sets unchanged.
    """
    spec = problem.input
    if (plan.n_IC or plan.n_init) and problem.initial is None:
        raise SamplingError(f"Problem {problem.name!r} has no initial condition")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(plan.seed).spawn(4)]

    if plan.strategy is SamplingStrategy.DOPTIMAL and plan.n_V > 0:
        candidates = problem.sample_interior(plan.candidate_count, streams[0])
        if plan.candidate_rows is CandidateRows.OPERATOR:
            rows, _ = apply_operator_rows(problem.pde, basis, candidates)
        else:
            rows = build_design_matrix(basis, candidates).values
        selected = d_optimal_select(rows, plan.n_V)
        virtual = candidates[selected]
        logger.info("D-optimal selection kept %d of %d candidates", plan.n_V, candidates.shape[0])
    else:
        virtual = problem.sample_interior(plan.n_V, streams[0])

    counts = split_count(plan.n_BC, len(problem.boundary))
    boundary = tuple(
        sample_facet(spec, n, bc.facet, streams[1]) for bc, n in zip(problem.boundary, counts)
    )
    if problem.initial is not None:
        initial = sample_facet(spec, plan.n_IC, problem.initial.facet, streams[2])
        init_data = sample_facet(spec, plan.n_init, problem.initial.facet, streams[3])
    else:
        initial = np.zeros((0, spec.dim))
        init_data = np.zeros((0, spec.dim))

    return PointPlan(virtual=virtual, boundary=boundary, initial=initial, init_data=init_data)
