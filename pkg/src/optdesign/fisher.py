"""Fisher information for multinomial logit designs.

Three equivalent constructions are provided:

* ``sum_i n_i F_i`` with ``F_i = X_i^T U_i X_i`` (:func:`fisher_total`,
  exact designs),
* ``G^T W G`` with block rows ``c_ij h_j^T`` (:func:`fisher_total`,
  approximate designs, and :func:`gw_factorization`),
* ``H U H^T`` with the stacked predictor matrix ``H`` (:func:`fisher_huh`).

The rank tools decide, from the predictor matrices alone, whether a set of
support points can carry a nonsingular Fisher matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .errors import DesignSpaceError
from .model import (
    PI_FLOOR,
    CategoryProbabilities,
    Feasibility,
    ModelSpec,
    _as_flat,
    _as_points,
    _check_eta,
    _monomials,
    cdl_inverse_columns,
    cdl_matrix,
    compute_u,
    model_matrices,
    pi_from_eta,
)

__all__ = [
    "DesignApprox",
    "DesignExact",
    "FisherMatrix",
    "HStack",
    "GWFactorization",
    "RankReport",
    "point_probabilities",
    "point_information",
    "fisher_at_point",
    "fisher_total",
    "fisher_huh",
    "gw_factorization",
    "build_h_stack",
    "u_block_matrix",
    "log_u_determinant",
    "logdet_psd",
    "matrix_rank",
    "subspace_intersection_dim",
    "analyze_rank",
]

RANK_RTOL = 1e-9
# eigenvalue floor for the unit-diagonal rescaling of F
SINGULAR_RTOL = 1e-12
# allowed deviation of approximate-design weights from summing to one
WEIGHT_SUM_TOL = 1e-12


def _points_2d(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        return pts.reshape(1, 1)
    if pts.ndim == 1:
        return pts.reshape(-1, 1)
    return pts


def _check_distinct(pts: np.ndarray):
    if pts.shape[0] != np.unique(pts, axis=0).shape[0]:
        raise ValueError("design points must be distinct")


@dataclass(frozen=True)
class DesignApprox:
    """Approximate design: distinct points with weights summing to one.

    Parameters
    ----------
    points : array_like, shape (m, d) or (m,)
    weights : array_like, shape (m,)
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _points_2d(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] == 0:
            raise ValueError("design is empty")
        if w.size != pts.shape[0]:
            raise ValueError("one weight per point required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL * w.size:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        _check_distinct(pts)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "DesignApprox":
        pts = _points_2d(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def support(self) -> "DesignApprox":
        """The same design restricted to points with positive weight."""
        keep = self.weights > 0
        return DesignApprox(self.points[keep], self.weights[keep] / self.weights[keep].sum())


@dataclass(frozen=True)
class DesignExact:
    """Exact design: distinct points with nonnegative integer counts."""

    points: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        pts = _points_2d(self.points)
        c = np.asarray(self.counts)
        if pts.shape[0] == 0:
            raise ValueError("design is empty")
        if c.size != pts.shape[0]:
            raise ValueError("one count per point required")
        if not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0):
            raise ValueError("counts must be nonnegative integers")
        c = c.astype(np.int64).ravel()
        if c.sum() == 0:
            raise ValueError("design has no runs")
        _check_distinct(pts)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.n

    def to_approx(self) -> DesignApprox:
        return DesignApprox(self.points, self.weights)


@dataclass(frozen=True)
class FisherMatrix:
    """A Fisher information matrix with its log-determinant.

    ``logdet`` is ``-inf`` when the matrix is numerically singular.
    """

    F: np.ndarray
    logdet: float
    min_eigenvalue: float

    @property
    def is_singular(self) -> bool:
        return not np.isfinite(self.logdet)

    @classmethod
    def from_matrix(cls, F: np.ndarray) -> "FisherMatrix":
        F = 0.5 * (F + F.T)
        return cls(F, logdet_psd(F), float(np.linalg.eigvalsh(F)[0]))


def logdet_psd(F: np.ndarray, rtol: float = SINGULAR_RTOL) -> float:
    """Log-determinant of a symmetric PSD matrix, ``-inf`` if singular.

    The matrix is first rescaled to unit diagonal so that the singularity test
    does not depend on the units of the predictors.
    """
    F = np.asarray(F, dtype=float)
    d = np.diag(F).copy()
    if F.shape[0] == 0:
        return 0.0
    if np.any(d <= 0) or not np.all(np.isfinite(F)):
        return -np.inf
    s = 1.0 / np.sqrt(d)
    R = F * s[:, None] * s[None, :]
    ev = np.linalg.eigvalsh(0.5 * (R + R.T))
    if ev[0] <= rtol * max(ev[-1], 1.0):
        return -np.inf
    return float(np.sum(np.log(d)) + np.sum(np.log(ev)))


def point_probabilities(model: ModelSpec, theta, points) -> np.ndarray:
    """Category probabilities at many points, shape ``(m, J)``.

    Raises
    ------
    DesignSpaceError
        For the first infeasible point.
    """
    pts = _as_points(model, points)
    X = model_matrices(model, pts)
    a = X[:, :-1, :] @ _as_flat(model, theta)
    for i in range(pts.shape[0]):
        ok, pair = _check_eta(model.link, a[i])
        if not ok:
            raise DesignSpaceError(f"design point {pts[i].tolist()} is infeasible",
                                   Feasibility(False, pair, a[i]))
    pi = pi_from_eta(model.link, a)
    bad = np.flatnonzero(np.any(pi < PI_FLOOR, axis=1))
    if bad.size:
        i = bad[0]
        raise DesignSpaceError(f"category probability underflows at {pts[i].tolist()}",
                               Feasibility(False, None, a[i]))
    return pi


def point_information(model: ModelSpec, theta, points) -> np.ndarray:
    """Per-point Fisher matrices ``F_i = X_i^T U_i X_i``, shape ``(m, p, p)``."""
    pts = _as_points(model, points)
    pi = point_probabilities(model, theta, pts)
    return information_from_u(model_matrices(model, pts), compute_u(model.link, pi))


def information_from_u(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """``X_i^T U_i X_i`` for stacked model matrices and ``U`` blocks."""
    Xk = X[:, :-1, :]
    F = np.einsum("mjp,mjk,mkq->mpq", Xk, U, Xk)
    return 0.5 * (F + np.swapaxes(F, 1, 2))


def fisher_at_point(model: ModelSpec, theta, x) -> np.ndarray:
    """Fisher information ``X^T U X`` contributed by one observation at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return point_information(model, theta, x)[0]


@dataclass(frozen=True)
class GWFactorization:
    """``F = G^T W G`` with ``G`` of shape ``(mJ, p)`` and diagonal ``W``."""

    G: np.ndarray
    w_diag: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.w_diag)

    def information(self) -> np.ndarray:
        return self.G.T @ (self.w_diag[:, None] * self.G)


def gw_factorization(model: ModelSpec, theta, design) -> GWFactorization:
    """Build ``G`` and ``W`` for a design (weights ``n_i/n`` for exact designs)."""
    pts = _as_points(model, design.points)
    pi = point_probabilities(model, theta, pts)
    cols = cdl_inverse_columns(model.link, pi)
    m, J = pi.shape
    off = model.offsets
    G = np.zeros((m, J, model.p))
    for j, spec in enumerate(model.h):
        G[:, :, off[j]:off[j + 1]] = cols[:, :, j, None] * _monomials(spec, pts)[:, None, :]
    if model.p_c:
        csum = cols[:, :, :J - 1].sum(axis=2)
        G[:, :, off[-1]:] = csum[:, :, None] * _monomials(model.hc, pts)[:, None, :]
    w = np.asarray(design.weights, dtype=float)
    return GWFactorization(G.reshape(m * J, model.p), (w[:, None] / pi).ravel())


def fisher_total(model: ModelSpec, theta, design) -> FisherMatrix:
    """Total Fisher information of a design.

    Approximate designs use ``G^T W G``; exact designs use ``sum_i n_i F_i``
    and so scale with the number of runs.
    """
    if isinstance(design, DesignExact):
        Fs = point_information(model, theta, design.points)
        F = np.tensordot(design.counts.astype(float), Fs, axes=1)
    elif isinstance(design, DesignApprox):
        F = gw_factorization(model, theta, design).information()
    else:
        raise TypeError("design must be DesignApprox or DesignExact")
    return FisherMatrix.from_matrix(F)


@dataclass(frozen=True)
class HStack:
    """Predictor matrices evaluated at the design points.

    Attributes
    ----------
    blocks : tuple of ndarray
        ``H_j`` with shape ``(p_j, m)``.
    hc : ndarray
        ``H_c`` with shape ``(p_c, m)``.
    """

    blocks: tuple[np.ndarray, ...]
    hc: np.ndarray

    @property
    def m(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def H(self) -> np.ndarray:
        """Assembled ``p x m(J-1)`` matrix: block diagonal ``H_j`` over a row of ``H_c``."""
        m, k = self.m, len(self.blocks)
        rows = []
        for j, Hj in enumerate(self.blocks):
            row = np.zeros((Hj.shape[0], m * k))
            row[:, j * m:(j + 1) * m] = Hj
            rows.append(row)
        rows.append(np.tile(self.hc, (1, k)))
        return np.vstack(rows)

    def reduced(self, mask) -> "HStack":
        """Keep only the points where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return HStack(tuple(Hj[:, mask] for Hj in self.blocks), self.hc[:, mask])


def build_h_stack(model: ModelSpec, points) -> HStack:
    pts = _as_points(model, points)
    return HStack(tuple(_monomials(spec, pts).T for spec in model.h),
                  _monomials(model.hc, pts).T)


def _design_sizes(design) -> np.ndarray:
    if isinstance(design, DesignExact):
        return design.counts.astype(float)
    return np.asarray(design.weights, dtype=float)


def u_block_matrix(model: ModelSpec, theta, design) -> np.ndarray:
    """The ``m(J-1)`` square matrix with blocks ``diag(n_i u_st(pi_i))``."""
    pi = point_probabilities(model, theta, design.points)
    u = compute_u(model.link, pi) * _design_sizes(design)[:, None, None]
    m, k = pi.shape[0], model.J - 1
    out = np.zeros((m * k, m * k))
    idx = np.arange(m)
    for s in range(k):
        for t in range(k):
            out[s * m + idx, t * m + idx] = u[:, s, t]
    return out


def fisher_huh(model: ModelSpec, theta, design) -> FisherMatrix:
    """Fisher information assembled as ``H U H^T``."""
    H = build_h_stack(model, design.points).H
    return FisherMatrix.from_matrix(H @ u_block_matrix(model, theta, design) @ H.T)


def log_u_determinant(model: ModelSpec, theta, design) -> float:
    """``log|U|`` from per-point probabilities, without forming ``U``.

    Uses ``|U| = (prod n_i)^{J-1} prod_i (prod_j pi_ij)^{-1} |C^T D_i^{-1} L|^{-2}``.
    """
    pi = point_probabilities(model, theta, design.points)
    n = _design_sizes(design)
    total = (model.J - 1) * np.sum(np.log(n)) - np.sum(np.log(pi))
    for row in pi:
        sign, ld = np.linalg.slogdet(cdl_matrix(model.link, CategoryProbabilities.from_pi(row)))
        total -= 2.0 * ld
    return float(total)


def matrix_rank(A, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol`` times the largest."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _row_basis(A: np.ndarray, rtol: float) -> np.ndarray:
    """Orthonormal basis (as rows) of the row space of ``A``."""
    m = A.shape[1]
    if A.size == 0:
        return np.zeros((0, m))
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0:
        return np.zeros((0, m))
    return vt[s > rtol * s[0]]


def _intersect_rows(Qa: np.ndarray, Qb: np.ndarray) -> np.ndarray:
    m = Qa.shape[1]
    if Qa.shape[0] == 0 or Qb.shape[0] == 0:
        return np.zeros((0, m))
    N = null_space(np.hstack([Qa.T, -Qb.T]), rcond=1e-9)
    if N.shape[1] == 0:
        return np.zeros((0, m))
    return _row_basis((Qa.T @ N[:Qa.shape[0]]).T, 1e-9)


def subspace_intersection_dim(matrices: Sequence[np.ndarray], rtol: float = RANK_RTOL,
                              method: str = "pairwise") -> int:
    """Dimension of the intersection of the row spaces of ``matrices``.

    Parameters
    ----------
    matrices : sequence of ndarray
        Each of shape ``(p_i, m)`` with a common ``m``.
    rtol : float
        Relative singular-value threshold for ranks.
    method : {"pairwise", "inclusion-exclusion"}
        ``"pairwise"`` uses ``dim(A & B) = rank A + rank B - rank [A; B]`` on
        the first pair and then folds in the others through an explicit basis
        of the running intersection. ``"inclusion-exclusion"`` applies the
        alternating sum of ranks of all stacked subsets in one go, which is
        exact for two matrices and for spans of shared monomials, but not for
        arbitrary families of three or more subspaces.

    Returns
    -------
    int
    """
    mats = [np.atleast_2d(np.asarray(A, dtype=float)) for A in matrices]
    if not mats:
        raise ValueError("need at least one matrix")
    m = mats[0].shape[1]
    if any(A.shape[1] != m for A in mats):
        raise ValueError("all matrices must have the same number of columns")
    if method == "inclusion-exclusion":
        total = 0
        for size in range(1, len(mats) + 1):
            for subset in combinations(mats, size):
                total += (-1) ** (size + 1) * matrix_rank(np.vstack(subset), rtol)
        return int(total)
    if method != "pairwise":
        raise ValueError(f"unknown method {method!r}")
    if len(mats) == 1:
        return matrix_rank(mats[0], rtol)
    first, second = mats[0], mats[1]
    dim = (matrix_rank(first, rtol) + matrix_rank(second, rtol)
           - matrix_rank(np.vstack([first, second]), rtol))
    if len(mats) == 2 or dim == 0:
        return int(dim)
    Q = _intersect_rows(_row_basis(first, rtol), _row_basis(second, rtol))
    for A in mats[2:]:
        Q = _intersect_rows(Q, _row_basis(A, rtol))
        if Q.shape[0] == 0:
            return 0
    return int(Q.shape[0])


@dataclass(frozen=True)
class RankReport:
    """Rank diagnostics for a candidate set of support points.

    Attributes
    ----------
    ranks_h : tuple of int
        Rank of each ``H_j``.
    rank_hc : int
    p_H : int
        Dimension of the intersection of the row spaces of the ``H_j``.
    k_min : int
        Fewest distinct support points that can give a nonsingular ``F``.
    pd : bool
        Whether ``F`` is positive definite when every point gets positive weight.
    violated : str or None
        Which condition fails when ``pd`` is false.
    rank_H : int
        Rank of the assembled ``H``; equals ``p`` exactly when ``pd``.
    """

    p_blocks: tuple[int, ...]
    p_c: int
    ranks_h: tuple[int, ...]
    rank_hc: int
    p_H: int
    k_min: int
    pd: bool
    violated: str | None
    rank_H: int


def analyze_rank(model: ModelSpec, points, rtol: float = RANK_RTOL) -> RankReport:
    """Decide from the predictors alone whether ``F`` can be nonsingular.

    ``F`` is positive definite for any positive weights on ``points`` iff every
    ``H_j`` has full row rank ``p_j``, ``H_c`` has full row rank ``p_c`` and the
    row space of ``H_c`` meets the common row space of the ``H_j`` only in 0.
    """
    pts = _as_points(model, points)
    if pts.shape[0] == 0:
        raise ValueError("no candidate points")
    _check_distinct(pts)
    hs = build_h_stack(model, pts)
    ranks = tuple(matrix_rank(Hj, rtol) for Hj in hs.blocks)
    rank_hc = matrix_rank(hs.hc, rtol)
    p_H = subspace_intersection_dim(hs.blocks, rtol)
    k_min = max(model.p_blocks)
    if model.p_c:
        k_min = max(k_min, model.p_c + p_H)
    violated = None
    for j, (r, pj) in enumerate(zip(ranks, model.p_blocks), start=1):
        if r < pj:
            violated = f"H_{j} has rank {r} < p_{j} = {pj}"
            break
    if violated is None and rank_hc < model.p_c:
        violated = f"H_c has rank {rank_hc} < p_c = {model.p_c}"
    if violated is None and model.p_c:
        shared = subspace_intersection_dim([hs.hc, *hs.blocks], rtol)
        if shared:
            violated = (f"row space of H_c meets the common row space of the H_j "
                        f"in dimension {shared}")
    return RankReport(model.p_blocks, model.p_c, ranks, rank_hc, p_H, k_min,
                      violated is None, violated, matrix_rank(hs.H, rtol))
