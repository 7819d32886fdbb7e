"""Multinomial logit model definitions.

This module holds the model description (link, categories, predictor blocks),
the map from design points to category probabilities, and the closed-form
pieces of the Fisher information that depend on a single design point: the
columns of ``(C^T D^{-1} L)^{-1}`` and the matrix ``U`` with entries
``u_st = c_s^T diag(pi)^{-1} c_t``.

The parameter vector is always ordered ``(beta_1, ..., beta_{J-1}, zeta)``,
where ``beta_j`` multiplies the category-specific predictors ``h_j(x)`` and
``zeta`` multiplies the common predictors ``h_c(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DesignSpaceError

__all__ = [
    "LinkKind",
    "OddsStructure",
    "PredictorSpec",
    "ModelSpec",
    "ParameterVector",
    "LinearPredictors",
    "Feasibility",
    "CategoryProbabilities",
    "LinkConstants",
    "evaluate_predictors",
    "build_model_matrix",
    "model_matrices",
    "linear_predictors",
    "validate_design_point",
    "pi_from_eta",
    "compute_pi",
    "link_constants",
    "cdl_matrix",
    "cdl_inverse_columns",
    "compute_u",
]

# exp(+-700) is still finite in double precision
ETA_CLAMP = 700.0
PI_FLOOR = 1e-300
# cumulative links need a_1 < a_2 < ... with at least this gap
CUMULATIVE_GAP = 1e-12


class LinkKind(str, Enum):
    """The four logit links for multinomial responses."""

    BASELINE = "baseline"
    CUMULATIVE = "cumulative"
    ADJACENT = "adjacent"
    CONTINUATION = "continuation"


class OddsStructure(str, Enum):
    """Proportional odds (po), non-proportional odds (npo) or partial (ppo)."""

    PO = "po"
    NPO = "npo"
    PPO = "ppo"


@dataclass(frozen=True)
class PredictorSpec:
    """An ordered list of monomials in the design factors.

    Parameters
    ----------
    terms : sequence of tuple of int
        Each term is an exponent vector ``(e_1, ..., e_d)``; the monomial is
        ``x_1**e_1 * ... * x_d**e_d``. The all-zero vector is the intercept.

    Examples
    --------
    >>> h = PredictorSpec.polynomial(2)
    >>> h.terms
    ((0,), (1,), (2,))
    """

    terms: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        terms = tuple(tuple(int(e) for e in t) for t in self.terms)
        if any(e < 0 for t in terms for e in t):
            raise ValueError("exponents must be nonnegative")
        if len({len(t) for t in terms}) > 1:
            raise ValueError("all terms must have the same number of factors")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def polynomial(cls, degree: int, d: int = 1, factor: int = 0) -> "PredictorSpec":
        """Powers ``0..degree`` of one factor."""
        terms = []
        for k in range(degree + 1):
            e = [0] * d
            e[factor] = k
            terms.append(tuple(e))
        return cls(tuple(terms))

    @classmethod
    def intercept(cls, d: int = 1) -> "PredictorSpec":
        return cls(((0,) * d,))

    @classmethod
    def linear(cls, d: int, intercept: bool = True, factors: Sequence[int] | None = None
               ) -> "PredictorSpec":
        """Intercept (optional) plus the listed factors (default: all)."""
        factors = range(d) if factors is None else factors
        terms = [(0,) * d] if intercept else []
        for k in factors:
            e = [0] * d
            e[k] = 1
            terms.append(tuple(e))
        return cls(tuple(terms))

    @property
    def size(self) -> int:
        return len(self.terms)

    @property
    def exponents(self) -> np.ndarray:
        return np.asarray(self.terms, dtype=float).reshape(len(self.terms), -1)

    def is_intercept_only(self) -> bool:
        return self.size == 1 and not any(self.terms[0])


def evaluate_predictors(spec: PredictorSpec, x) -> np.ndarray:
    """Evaluate every monomial of ``spec`` at the point ``x``.

    Parameters
    ----------
    spec : PredictorSpec
    x : array_like, shape (d,)

    Returns
    -------
    ndarray, shape (spec.size,)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("x must be a single point")
    if spec.size and len(spec.terms[0]) != x.size:
        raise ValueError(f"point has {x.size} coordinates, predictors expect {len(spec.terms[0])}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return _monomials(spec, x[None, :])[0]


def _monomials(spec: PredictorSpec, points: np.ndarray) -> np.ndarray:
    if spec.size == 0:
        return np.zeros((points.shape[0], 0))
    return np.prod(points[:, None, :] ** spec.exponents[None, :, :], axis=2)


@dataclass(frozen=True)
class ModelSpec:
    """A multinomial logit model ``C^T log(L pi) = X theta``.

    Parameters
    ----------
    d : int
        Number of design factors.
    J : int
        Number of response categories, at least 2.
    link : LinkKind or str
    h : sequence of PredictorSpec
        Category-specific predictors ``h_1, ..., h_{J-1}``.
    hc : PredictorSpec, optional
        Predictors shared by all categories. Empty by default.
    """

    d: int
    J: int
    link: LinkKind
    h: tuple[PredictorSpec, ...]
    hc: PredictorSpec = field(default_factory=PredictorSpec)

    def __post_init__(self):
        object.__setattr__(self, "link", LinkKind(self.link))
        object.__setattr__(self, "h", tuple(self.h))
        if self.J < 2:
            raise ValueError("J must be at least 2")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if len(self.h) != self.J - 1:
            raise ValueError(f"expected {self.J - 1} category-specific predictor blocks")
        for k, spec in enumerate(self.h, start=1):
            if spec.size == 0:
                raise ValueError(f"h_{k} must have at least one term")
            if len(spec.terms[0]) != self.d:
                raise ValueError(f"h_{k} terms do not have {self.d} exponents")
        if self.hc.size and len(self.hc.terms[0]) != self.d:
            raise ValueError(f"h_c terms do not have {self.d} exponents")

    @classmethod
    def npo(cls, link, J: int, h: PredictorSpec, d: int = 1) -> "ModelSpec":
        """Every category gets its own copy of ``h``."""
        return cls(d, J, link, (h,) * (J - 1))

    @classmethod
    def po(cls, link, J: int, hc: PredictorSpec, d: int = 1) -> "ModelSpec":
        """Category-specific intercepts plus shared slopes ``hc``."""
        return cls(d, J, link, (PredictorSpec.intercept(d),) * (J - 1), hc)

    @property
    def p_blocks(self) -> tuple[int, ...]:
        return tuple(spec.size for spec in self.h)

    @property
    def p_c(self) -> int:
        return self.hc.size

    @property
    def p(self) -> int:
        return sum(self.p_blocks) + self.p_c

    @property
    def offsets(self) -> tuple[int, ...]:
        """Start index of each beta block in the flat parameter vector."""
        return tuple(np.concatenate([[0], np.cumsum(self.p_blocks)]).astype(int))

    @property
    def odds(self) -> OddsStructure:
        if all(spec.is_intercept_only() for spec in self.h):
            return OddsStructure.PO
        if self.p_c == 0:
            return OddsStructure.NPO
        return OddsStructure.PPO


@dataclass(frozen=True)
class ParameterVector:
    """Model parameters split into ``beta_1..beta_{J-1}`` and ``zeta``."""

    beta_blocks: tuple[np.ndarray, ...]
    zeta: np.ndarray

    @classmethod
    def from_flat(cls, model: ModelSpec, theta) -> "ParameterVector":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != model.p:
            raise ValueError(f"theta has {theta.size} entries, model needs {model.p}")
        off = model.offsets
        blocks = tuple(theta[off[k]:off[k + 1]].copy() for k in range(model.J - 1))
        return cls(blocks, theta[off[-1]:].copy())

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([*self.beta_blocks, self.zeta])


def _as_flat(model: ModelSpec, theta) -> np.ndarray:
    if isinstance(theta, ParameterVector):
        theta = theta.flat
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != model.p:
        raise ValueError(f"theta has {theta.size} entries, model needs {model.p}")
    return theta


def _as_points(model: ModelSpec, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if model.d == 1 else pts.reshape(1, -1)
    if pts.shape[1] != model.d:
        raise ValueError(f"points have {pts.shape[1]} coordinates, model has d={model.d}")
    return pts


def model_matrices(model: ModelSpec, points) -> np.ndarray:
    """Model matrices ``X_i`` for many points at once.

    Returns
    -------
    ndarray, shape (m, J, p)
        Row ``j < J`` holds ``h_j(x)`` in block ``j`` and ``h_c(x)`` in the
        trailing columns; the last row is zero.
    """
    pts = _as_points(model, points)
    m, J = pts.shape[0], model.J
    X = np.zeros((m, J, model.p))
    off = model.offsets
    for j, spec in enumerate(model.h):
        X[:, j, off[j]:off[j + 1]] = _monomials(spec, pts)
    if model.p_c:
        X[:, :J - 1, off[-1]:] = _monomials(model.hc, pts)[:, None, :]
    return X


def build_model_matrix(model: ModelSpec, x) -> np.ndarray:
    """The ``J x p`` model matrix at a single design point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != model.d:
        raise ValueError(f"point has {x.size} coordinates, model has d={model.d}")
    return model_matrices(model, x.reshape(1, -1))[0]


@dataclass(frozen=True)
class LinearPredictors:
    """``a_j = h_j(x)^T beta_j + h_c(x)^T zeta`` for ``j = 1..J-1``."""

    a: np.ndarray


def linear_predictors(model: ModelSpec, theta, x) -> LinearPredictors:
    X = build_model_matrix(model, x)
    return LinearPredictors(X[:-1] @ _as_flat(model, theta))


@dataclass(frozen=True)
class Feasibility:
    """Whether a design point lies in the model's domain.

    ``violated_pair`` gives 1-based indices ``(j, j+1)`` of the first pair
    with ``a_j >= a_{j+1}`` for cumulative links.
    """

    feasible: bool
    violated_pair: tuple[int, int] | None
    a: np.ndarray

    def __bool__(self):
        return self.feasible


def _check_eta(link: LinkKind, a: np.ndarray) -> tuple[bool, tuple[int, int] | None]:
    if not np.all(np.isfinite(a)):
        return False, None
    if link is LinkKind.CUMULATIVE:
        bad = np.flatnonzero(np.diff(a) <= CUMULATIVE_GAP)
        if bad.size:
            return False, (int(bad[0]) + 1, int(bad[0]) + 2)
    return True, None


def validate_design_point(model: ModelSpec, theta, x) -> Feasibility:
    a = linear_predictors(model, theta, x).a
    ok, pair = _check_eta(model.link, a)
    return Feasibility(ok, pair, a)


@dataclass(frozen=True)
class CategoryProbabilities:
    """Category probabilities at a point.

    Attributes
    ----------
    pi : ndarray, shape (J,)
    gamma : ndarray, shape (J-1,)
        Cumulative sums ``pi_1 + ... + pi_j``.
    gamma_c : ndarray, shape (J-1,)
        Complements ``1 - gamma_j`` computed from the upper tail, which keeps
        full relative accuracy when ``gamma_j`` is close to one.
    """

    pi: np.ndarray
    gamma: np.ndarray
    gamma_c: np.ndarray

    @classmethod
    def from_pi(cls, pi) -> "CategoryProbabilities":
        pi = np.asarray(pi, dtype=float)
        gamma = np.cumsum(pi[..., :-1], axis=-1)
        gamma_c = np.cumsum(pi[..., :0:-1], axis=-1)[..., ::-1]
        return cls(pi, gamma, gamma_c)


def pi_from_eta(link: LinkKind, a) -> np.ndarray:
    """Map linear predictors to category probabilities.

    Parameters
    ----------
    link : LinkKind
    a : array_like, shape (..., J-1)
        Linear predictors; leading axes are broadcast. Values are clamped to
        ``[-700, 700]``.

    Returns
    -------
    ndarray, shape (..., J)
    """
    link = LinkKind(link)
    a = np.clip(np.asarray(a, dtype=float), -ETA_CLAMP, ETA_CLAMP)
    zero = np.zeros(a.shape[:-1] + (1,))
    if link is LinkKind.BASELINE:
        logits = np.concatenate([a, zero], axis=-1)
    elif link is LinkKind.ADJACENT:
        tail = np.cumsum(a[..., ::-1], axis=-1)[..., ::-1]
        logits = np.concatenate([tail, zero], axis=-1)
    elif link is LinkKind.CONTINUATION:
        cum = np.cumsum(np.logaddexp(0.0, a), axis=-1)
        return np.exp(np.concatenate([a - cum, -cum[..., -1:]], axis=-1))
    else:
        g = expit(a)
        one = np.ones_like(zero)
        return np.diff(np.concatenate([zero, g, one], axis=-1), axis=-1)
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))


def compute_pi(model: ModelSpec, theta, x) -> CategoryProbabilities:
    """Category probabilities at ``x``.

    Raises
    ------
    DesignSpaceError
        If ``x`` is infeasible or some probability underflows.
    """
    verdict = validate_design_point(model, theta, x)
    if not verdict.feasible:
        raise DesignSpaceError(f"design point {np.ravel(x).tolist()} is infeasible", verdict)
    pi = pi_from_eta(model.link, verdict.a)
    if np.any(pi < PI_FLOOR):
        raise DesignSpaceError(f"category probability underflows at {np.ravel(x).tolist()}", verdict)
    return CategoryProbabilities.from_pi(pi)


@dataclass(frozen=True)
class LinkConstants:
    """Constant matrices with ``eta = C^T log(L pi)``.

    ``Ct`` is ``J x (2J-1)`` and ``L`` is ``(2J-1) x J``.
    """

    Ct: np.ndarray
    L: np.ndarray

    def D(self, pi) -> np.ndarray:
        return np.diag(self.L @ np.asarray(pi, dtype=float))


def link_constants(link: LinkKind, J: int) -> LinkConstants:
    link = LinkKind(link)
    k = J - 1
    Ct = np.zeros((J, 2 * J - 1))
    Ct[:k, :k] = np.eye(k)
    Ct[:k, k:2 * k] = -np.eye(k)
    Ct[k, -1] = 1.0
    L = np.zeros((2 * J - 1, J))
    L[-1] = 1.0
    for j in range(k):
        if link is LinkKind.BASELINE:
            L[j, j] = 1.0
            L[k + j, J - 1] = 1.0
        elif link is LinkKind.CUMULATIVE:
            L[j, :j + 1] = 1.0
            L[k + j, j + 1:] = 1.0
        elif link is LinkKind.CONTINUATION:
            L[j, j] = 1.0
            L[k + j, j + 1:] = 1.0
        else:
            L[j, j] = 1.0
            L[k + j, j + 1] = 1.0
    return LinkConstants(Ct, L)


def _probs(pi) -> CategoryProbabilities:
    if isinstance(pi, CategoryProbabilities):
        return pi
    return CategoryProbabilities.from_pi(pi)


def cdl_matrix(link: LinkKind, pi) -> np.ndarray:
    """The ``J x J`` matrix ``C^T D(pi)^{-1} L`` formed explicitly."""
    pi = _probs(pi).pi
    lc = link_constants(link, pi.size)
    return lc.Ct @ (lc.L / (lc.L @ pi)[:, None])


def cdl_inverse_columns(link: LinkKind, pi) -> np.ndarray:
    """Closed-form inverse of ``C^T D^{-1} L``.

    Parameters
    ----------
    link : LinkKind
    pi : CategoryProbabilities or array_like, shape (..., J)

    Returns
    -------
    ndarray, shape (..., J, J)
        Column ``j`` is ``c_j``. The last column equals ``pi``.
    """
    link = LinkKind(link)
    cp = _probs(pi)
    P, g, gc = cp.pi, cp.gamma, cp.gamma_c
    J = P.shape[-1]
    k = J - 1
    out = np.zeros(P.shape[:-1] + (J, J))
    out[..., :, k] = P
    idx = np.arange(J)
    for j in range(k):
        if link is LinkKind.BASELINE:
            col = -P[..., j, None] * P
            col[..., j] += P[..., j]
        elif link is LinkKind.CUMULATIVE:
            col = np.zeros_like(P)
            s = g[..., j] * gc[..., j]
            col[..., j] = s
            col[..., j + 1] = -s
        elif link is LinkKind.CONTINUATION:
            prev = gc[..., j - 1] if j > 0 else np.ones(P.shape[:-1])
            scale = P[..., j] / prev
            col = np.where(idx > j, -P, 0.0)
            col[..., j] = gc[..., j]
            col = scale[..., None] * col
        else:
            col = np.where(idx <= j, gc[..., j, None] * P, -g[..., j, None] * P)
        out[..., :, j] = col
    return out


def compute_u(link: LinkKind, pi) -> np.ndarray:
    """Closed-form ``(J-1) x (J-1)`` matrix ``u_st = c_s^T diag(pi)^{-1} c_t``.

    Cumulative links give a tridiagonal matrix and continuation-ratio links
    a diagonal one. Accepts batched probabilities with shape ``(..., J)``.
    """
    link = LinkKind(link)
    cp = _probs(pi)
    P, g, gc = cp.pi, cp.gamma, cp.gamma_c
    k = P.shape[-1] - 1
    if link is LinkKind.BASELINE:
        q = P[..., :k]
        U = -q[..., :, None] * q[..., None, :]
        U[..., np.arange(k), np.arange(k)] += q
        return U
    if link is LinkKind.ADJACENT:
        s, t = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        lo, hi = np.minimum(s, t), np.maximum(s, t)
        return g[..., lo] * gc[..., hi]
    U = np.zeros(P.shape[:-1] + (k, k))
    diag = np.arange(k)
    if link is LinkKind.CONTINUATION:
        prev = np.concatenate([np.ones(P.shape[:-1] + (1,)), gc[..., :-1]], axis=-1)
        U[..., diag, diag] = P[..., :k] * gc / prev
        return U
    gg = g * gc
    U[..., diag, diag] = gg ** 2 * (1.0 / P[..., :k] + 1.0 / P[..., 1:])
    if k > 1:
        off = -gg[..., :-1] * gg[..., 1:] / P[..., 1:k]
        U[..., diag[:-1], diag[1:]] = off
        U[..., diag[1:], diag[:-1]] = off
    return U
