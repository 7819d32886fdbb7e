"""D-optimal design search.

Approximate designs are found with the lift-one algorithm: one weight at a
time is moved to the maximizer of a one-dimensional polynomial profile, with
the other weights rescaled proportionally. Exact designs are found with a
pairwise exchange that reallocates runs between two points at a time. Both
work on the per-point information matrices, so the same code serves local
D-optimality (``F_i(theta)``) and EW D-optimality (``E F_i``).
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from .errors import DesignSpaceError, InfeasibleDesignError, SingularDesignError
from .fisher import (
    DesignApprox,
    DesignExact,
    analyze_rank,
    information_from_u,
    logdet_psd,
    matrix_rank,
    point_information,
)
from .model import ModelSpec, _as_flat, _as_points, compute_u, model_matrices, pi_from_eta

__all__ = [
    "OptimizerConfig",
    "LiftOneProfile",
    "ExchangeProfile",
    "PriorSample",
    "EquivalenceReport",
    "LiftOneResult",
    "ExchangeResult",
    "lift_one_profile",
    "maximize_profile",
    "lift_one",
    "exchange_profile",
    "exchange",
    "grid_points",
    "grid_search",
    "ew_information",
    "ew_lift_one",
    "bayesian_objective",
    "efficiency",
    "equivalence_check",
    "design_logdet",
]

log = logging.getLogger(__name__)

THREADS_ENV = "OPTDESIGN_THREADS"
# relative margin an exchange move must clear to count as an improvement
EXCHANGE_MARGIN = 1e-12
# relative tolerance when comparing profile values at candidate maximizers
TIE_RTOL = 1e-13


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by the optimizers.

    Parameters
    ----------
    rng_seed : int
        Seed for the visiting order of points and pairs.
    max_passes : int
        Upper bound on full sweeps.
    rel_tol : float
        A lift-one sweep whose gain is below ``rel_tol`` times the objective
        ends the search.
    weight_floor : float
        Final weights below this are set to zero.
    grid_fallback_points : int
        Grid size for profile maximization when root finding breaks down.
    exchange_fit : {"spread", "integer"}
        Nodes used to fit the exchange profile polynomial. ``"integer"``
        uses ``z = 0..q``; ``"spread"`` uses Chebyshev points on
        ``[0, n_i + n_j]``, which extrapolates far better for large ``n``.
    restarts : int
        Extra exchange runs from random feasible starts; the best is kept.
    accelerate : bool
        After each lift-one sweep, run Newton steps on the weights of the
        current support. This never lowers the objective and removes the
        slow zig-zag between nearly collinear neighbouring points.
    """

    rng_seed: int = 0
    max_passes: int = 100
    rel_tol: float = 1e-10
    weight_floor: float = 1e-8
    grid_fallback_points: int = 200
    exchange_fit: str = "spread"
    restarts: int = 0
    accelerate: bool = True


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class _Objective:
    """``det(sum_i w_i F_i)`` on a rescaled copy of the per-point matrices.

    The stack is conjugated by a diagonal matrix and multiplied by a constant
    so that the uniform design has unit diagonal information and determinant
    near one. Both changes multiply every determinant by the same constant
    ``exp(-offset)``, so maximizers are unaffected.
    """

    def __init__(self, Fs: np.ndarray):
        Fs = np.asarray(Fs, dtype=float)
        self.m, self.p = Fs.shape[0], Fs.shape[1]
        Fu = Fs.mean(axis=0)
        d = np.diag(Fu).copy()
        d[d <= 0] = 1.0
        s = 1.0 / np.sqrt(d)
        scaled = Fs * s[None, :, None] * s[None, None, :]
        ld = logdet_psd(scaled.mean(axis=0))
        c = np.exp(-ld / self.p) if np.isfinite(ld) else 1.0
        self.Fs = scaled * c
        self.offset = float(np.sum(np.log(d)) - self.p * np.log(c))

    def info(self, w) -> np.ndarray:
        return np.tensordot(w, self.Fs, axes=1)

    def det(self, w) -> float:
        return float(np.linalg.det(self.info(w)))

    def dets(self, W) -> np.ndarray:
        return np.linalg.det(np.einsum("km,mpq->kpq", W, self.Fs))

    def logdet(self, w) -> float:
        """Log-determinant of the unscaled information."""
        return logdet_psd(self.info(w)) + self.offset


# ----------------------------------------------------------------------------
# lift-one profile


@dataclass(frozen=True)
class LiftOneProfile:
    """Objective along the lift-one path for a single point.

    ``f_i(z) = (1-z)^(p-J+1) * sum_j b_j z^j (1-z)^(J-1-j)``, the determinant
    when point ``i`` gets weight ``z`` and the others are rescaled to sum to
    ``1 - z``.
    """

    b: np.ndarray
    p: int

    @property
    def J(self) -> int:
        return self.b.size

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        J = self.J
        total = sum(self.b[j] * z ** j * (1 - z) ** (J - 1 - j) for j in range(J))
        return (1 - z) ** (self.p - J + 1) * total


def _profile_b(f0: float, f_nodes: np.ndarray, p: int, J: int) -> np.ndarray:
    """Recover ``b`` from ``f_i(0)`` and ``f_i(1/(j+1))`` for ``j = 1..J-1``."""
    k = J - 1
    b = np.zeros(J)
    b[0] = f0
    if k == 0:
        return b
    j = np.arange(1, J, dtype=float)
    c = (j + 1) ** p * j ** (k - p) * f_nodes - j ** k * f0
    B = j[:, None] ** np.arange(k)[None, :]
    b[1:] = np.linalg.solve(B, c)[::-1]
    return b


def _lift_weights(w: np.ndarray, i: int, z) -> np.ndarray:
    """Weights with ``w_i = z`` and the rest scaled by ``(1-z)/(1-w_i)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    W = np.outer((1 - z) / (1 - w[i]), w)
    W[:, i] = z
    return W


def _profile_on(obj: _Objective, w: np.ndarray, i: int, J: int) -> LiftOneProfile:
    nodes = np.concatenate([[0.0], 1.0 / np.arange(2, J + 1)])
    vals = obj.dets(_lift_weights(w, i, nodes))
    return LiftOneProfile(_profile_b(vals[0], vals[1:], obj.p, J), obj.p)


def lift_one_profile(model: ModelSpec, theta, design: DesignApprox, i: int) -> LiftOneProfile:
    """Profile polynomial of point ``i`` for ``design`` (unscaled determinant).

    Raises
    ------
    SingularDesignError
        If ``design`` has a singular information matrix or ``w_i = 1``.
    """
    Fs = point_information(model, theta, design.points)
    w = design.weights
    if not np.isfinite(logdet_psd(np.tensordot(w, Fs, axes=1))):
        raise SingularDesignError("profile needs a design with nonsingular information")
    if w[i] >= 1:
        raise SingularDesignError("profile undefined when w_i = 1")
    nodes = np.concatenate([[0.0], 1.0 / np.arange(2, model.J + 1)])
    W = _lift_weights(w, i, nodes)
    vals = np.linalg.det(np.einsum("km,mpq->kpq", W, Fs))
    return LiftOneProfile(_profile_b(vals[0], vals[1:], model.p, model.J), model.p)


def _stationary_poly(b: np.ndarray, p: int) -> np.ndarray:
    """Ascending coefficients of the stationarity condition of a profile.

    ``sum_j j b_j z^(j-1) (1-z)^(J-1-j) - p sum_j b_j z^j (1-z)^(J-1-j)``,
    a polynomial of degree at most ``J - 1``.
    """
    J = b.size
    out = np.zeros(J)
    for j in range(J):
        tail = npoly.polypow([1.0, -1.0], J - 1 - j)
        out = npoly.polyadd(out, npoly.polymul(np.eye(1, j + 1, j)[0], -p * b[j] * tail))
        if j:
            out = npoly.polyadd(out, npoly.polymul(np.eye(1, j, j - 1)[0], j * b[j] * tail))
    return np.asarray(out, dtype=float)


def _real_roots(coef: np.ndarray) -> np.ndarray:
    """Real roots of a polynomial with ascending coefficients.

    Degrees one and two use closed forms; higher degrees use the eigenvalues
    of the companion matrix.
    """
    coef = np.asarray(coef, dtype=float)
    scale = np.max(np.abs(coef)) if coef.size else 0.0
    if scale == 0 or not np.isfinite(scale):
        return np.zeros(0)
    coef = coef / scale
    nz = np.flatnonzero(np.abs(coef) > 1e-14)
    coef = coef[: nz[-1] + 1]
    deg = coef.size - 1
    if deg <= 0:
        return np.zeros(0)
    if deg == 1:
        return np.array([-coef[0] / coef[1]])
    if deg == 2:
        c, bq, a = coef
        disc = bq * bq - 4 * a * c
        if disc < 0:
            return np.zeros(0)
        # avoids cancellation in the smaller root
        qq = -0.5 * (bq + np.copysign(np.sqrt(disc), bq))
        roots = [qq / a]
        if qq != 0:
            roots.append(c / qq)
        return np.array(roots)
    comp = np.zeros((deg, deg))
    comp[1:, :-1] = np.eye(deg - 1)
    comp[:, -1] = -coef[:-1] / coef[-1]
    ev = np.linalg.eigvals(comp)
    real = ev[np.abs(ev.imag) <= 1e-9 * (1 + np.abs(ev.real))].real
    return real


def maximize_profile(profile: LiftOneProfile, p: int | None = None,
                     grid_fallback_points: int = 200) -> float:
    """Global maximizer of a lift-one profile on ``[0, 1]``.

    Candidates are ``z = 0`` and the real roots in ``(0, 1)`` of the
    derivative condition, plus ``z = 1`` when ``p = J - 1``. Ties go to the
    smaller ``z``, and ``z = 0`` is kept unless some candidate beats it.

    Parameters
    ----------
    profile : LiftOneProfile
    p : int, optional
        Number of parameters; defaults to ``profile.p``.
    grid_fallback_points : int
        Used only if root finding fails.

    Returns
    -------
    float
    """
    p = profile.p if p is None else p
    prof = profile if p == profile.p else LiftOneProfile(profile.b, p)
    b = prof.b
    J = b.size
    if J == 1 or not np.any(b):
        return 0.0
    scale = np.max(np.abs(b))
    bn = b / scale
    normed = LiftOneProfile(bn, p)
    cands = [0.0]
    try:
        coef = _stationary_poly(bn, p)
        roots = _real_roots(coef)
        if not np.all(np.isfinite(roots)):
            raise FloatingPointError
        for r in roots:
            if 0.0 < r < 1.0:
                # one Newton step against the stationarity polynomial
                dq = npoly.polyval(r, npoly.polyder(coef))
                if dq != 0:
                    r2 = r - npoly.polyval(r, coef) / dq
                    if 0.0 < r2 < 1.0:
                        r = r2
                cands.append(float(r))
    except (np.linalg.LinAlgError, FloatingPointError):
        grid = np.linspace(0.0, 1.0, grid_fallback_points)
        vals = normed(grid)
        k = int(np.argmax(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = minimize_scalar(lambda z: -normed(z), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        cands.extend([grid[k], float(res.x)])
    if p == J - 1:
        cands.append(1.0)
    cands = np.array(sorted(set(cands)))
    vals = normed(cands)
    f0 = vals[0]
    best = np.max(vals)
    if best <= f0:
        return 0.0
    k = np.flatnonzero(vals >= best - TIE_RTOL * abs(best))[0]
    return float(cands[k])


# ----------------------------------------------------------------------------
# equivalence


@dataclass(frozen=True)
class EquivalenceReport:
    """Optimality certificate from the general equivalence theorem.

    Attributes
    ----------
    slacks : ndarray
        ``(max_z f_i(z) - f(w)) / f(w)`` per point.
    maximizers : ndarray
        The maximizing ``z`` for each point.
    tol : float
    optimal : bool
        True iff every slack is at most ``tol``.
    """

    slacks: np.ndarray
    maximizers: np.ndarray
    tol: float
    optimal: bool

    @property
    def max_slack(self) -> float:
        return float(np.max(self.slacks)) if self.slacks.size else 0.0


def _equivalence(obj: _Objective, w: np.ndarray, J: int, tol: float,
                 fallback: int = 200) -> EquivalenceReport:
    f = obj.det(w)
    m = w.size
    slacks = np.zeros(m)
    zs = w.copy()
    for i in range(m):
        if w[i] >= 1.0:
            continue
        prof = _profile_on(obj, w, i, J)
        z = maximize_profile(prof, obj.p, fallback)
        zs[i] = z
        fz = obj.dets(_lift_weights(w, i, [z]))[0]
        slacks[i] = max(fz - f, 0.0) / f
    return EquivalenceReport(slacks, zs, tol, bool(np.all(slacks <= tol)))


def equivalence_check(model: ModelSpec, theta, design: DesignApprox,
                      tol: float = 1e-9) -> EquivalenceReport:
    """Check whether ``design`` is D-optimal on its own set of points.

    Points with zero weight are included, so passing a design over the full
    candidate set certifies optimality over that set.

    Raises
    ------
    SingularDesignError
        If ``design`` has singular information.
    """
    obj = _Objective(point_information(model, theta, design.points))
    w = np.asarray(design.weights, dtype=float)
    if not obj.det(w) > 0 or not np.isfinite(logdet_psd(obj.info(w))):
        raise SingularDesignError("equivalence check needs a nonsingular design")
    return _equivalence(obj, w, model.J, tol)


# ----------------------------------------------------------------------------
# lift-one


def _support_newton(obj: _Objective, w: np.ndarray, max_iter: int = 50) -> np.ndarray:
    """Newton ascent of ``log det`` over the simplex on the support of ``w``.

    Steps are clipped at the boundary, which drops points whose weight
    reaches zero. Returns weights with an objective at least that of ``w``.
    """
    w = w.copy()
    current = logdet_psd(obj.info(w))
    for _ in range(max_iter):
        S = np.flatnonzero(w > 0)
        k = S.size
        if k < 2:
            break
        A = np.linalg.solve(obj.info(w), obj.Fs[S])
        g = np.einsum("kii->k", A)
        H = -np.einsum("aij,bji->ab", A, A)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H
        K[:k, k] = K[k, :k] = 1.0
        rhs = np.concatenate([-g, [0.0]])
        step = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
        if not np.all(np.isfinite(step)) or not np.any(step):
            break
        ws = w[S]
        neg = step < 0
        t = min(1.0, float(np.min(-ws[neg] / step[neg]))) if neg.any() else 1.0
        improved = False
        while t > 1e-10:
            trial = w.copy()
            trial[S] = np.maximum(ws + t * step, 0.0)
            trial[S[trial[S] < 1e-14]] = 0.0
            trial /= trial.sum()
            val = logdet_psd(obj.info(trial))
            if val > current:
                improved = val - current > 1e-15
                w, current = trial, val
                break
            t *= 0.5
        if not improved:
            break
    return w


@dataclass(frozen=True)
class LiftOneResult:
    """Outcome of a lift-one search.

    Attributes
    ----------
    design : DesignApprox
        Weights over every candidate point, zeros included.
    report : EquivalenceReport
    logdet : float
        Log-determinant of the information of ``design``.
    n_passes : int
    converged : bool
        True when the sweep gain fell below ``rel_tol`` and the equivalence
        check passed at ``10 * rel_tol``.
    history : ndarray
        Log-determinant after each pass, starting from the uniform design.
    seed : int
    """

    design: DesignApprox
    report: EquivalenceReport
    logdet: float
    n_passes: int
    converged: bool
    history: np.ndarray
    seed: int

    @property
    def support(self) -> DesignApprox:
        return self.design.support()


def _lift_one_stack(Fs: np.ndarray, points: np.ndarray, J: int, config: OptimizerConfig,
                    report_fn=None) -> LiftOneResult:
    obj = _Objective(Fs)
    m = obj.m
    rng = np.random.default_rng(config.rng_seed)
    w = np.full(m, 1.0 / m)
    f = obj.det(w)
    if not (f > 0 and np.isfinite(logdet_psd(obj.info(w)))):
        report = report_fn() if report_fn else None
        raise InfeasibleDesignError("the uniform design on the candidate points is singular",
                                    report)
    history = [np.log(f) + obj.offset]
    cert_tol = 10 * config.rel_tol
    converged = False
    report = None
    passes = 0
    while passes < config.max_passes:
        passes += 1
        f_start = f
        for i in rng.permutation(m):
            if w[i] >= 1.0:
                continue
            z = maximize_profile(_profile_on(obj, w, i, J), obj.p, config.grid_fallback_points)
            if z == w[i]:
                continue
            w_new = _lift_weights(w, i, [z])[0]
            f_new = obj.det(w_new)
            if f_new > f:
                w, f = w_new, f_new
        if config.accelerate:
            w = _support_newton(obj, w)
            f = obj.det(w)
        history.append(np.log(f) + obj.offset)
        if f - f_start <= config.rel_tol * f_start:
            report = _equivalence(obj, w, J, cert_tol, config.grid_fallback_points)
            if report.optimal:
                converged = True
                break
    small = w < config.weight_floor
    if np.any(small):
        w = np.where(small, 0.0, w)
        w = w / w.sum()
    report = _equivalence(obj, w, J, cert_tol, config.grid_fallback_points)
    converged = converged and report.optimal
    if not converged:
        log.warning("lift-one stopped after %d passes without certified convergence", passes)
    design = DesignApprox(points, w)
    return LiftOneResult(design, report, obj.logdet(w), passes, converged,
                         np.asarray(history), config.rng_seed)


def lift_one(model: ModelSpec, theta, points, config: OptimizerConfig | None = None
             ) -> LiftOneResult:
    """Locally D-optimal approximate design on a candidate set.

    Parameters
    ----------
    model : ModelSpec
    theta : array_like or ParameterVector
    points : array_like, shape (m, d) or (m,)
        Candidate design points.
    config : OptimizerConfig, optional

    Returns
    -------
    LiftOneResult

    Raises
    ------
    InfeasibleDesignError
        If no design on ``points`` has nonsingular information.
    """
    config = config or OptimizerConfig()
    pts = _as_points(model, points)
    Fs = point_information(model, theta, pts)
    return _lift_one_stack(Fs, pts, model.J, config, lambda: analyze_rank(model, pts))


# ----------------------------------------------------------------------------
# exchange


@dataclass(frozen=True)
class ExchangeProfile:
    """Objective as a function of ``z = n_i`` with ``n_i + n_j = c`` fixed.

    Attributes
    ----------
    g : ndarray
        Ascending coefficients in ``z``: ``f_ij(z) = sum_s g_s z^s``. Empty
        when the profile is tabulated directly.
    q : int
        Degree bound.
    c : int
        ``n_i + n_j``.
    table : ndarray or None
        Direct values at ``z = 0..c`` when ``c <= q``.
    """

    g: np.ndarray
    q: int
    c: int
    table: np.ndarray | None = None

    def values(self) -> np.ndarray:
        """Objective at every ``z = 0..c``."""
        if self.table is not None:
            return self.table
        t = np.arange(self.c + 1) / self.c
        h = self.g * float(self.c) ** np.arange(self.g.size)
        return npoly.polyval(t, h)

    def __call__(self, z):
        if self.table is not None:
            return self.table[np.asarray(z, dtype=int)]
        return npoly.polyval(np.asarray(z, dtype=float), self.g)


def exchange_degree(p: int, J: int, k_min: int) -> int:
    """Degree bound ``min(2J - 2, p - k_min + 2, p)`` of an exchange profile."""
    return int(min(2 * J - 2, p - k_min + 2, p))


def _exchange_profile_on(obj: _Objective, n: np.ndarray, i: int, j: int, q: int,
                         fit: str) -> ExchangeProfile:
    c = int(n[i] + n[j])
    N = float(n.sum())
    base = n.astype(float).copy()
    base[i] = base[j] = 0.0

    def dets(z):
        z = np.asarray(z, dtype=float)
        W = np.tile(base, (z.size, 1))
        W[:, i] = z
        W[:, j] = c - z
        return obj.dets(W / N)

    if c <= q:
        return ExchangeProfile(np.zeros(0), q, c, dets(np.arange(c + 1)))
    if fit == "integer":
        z = np.arange(q + 1, dtype=float)
        v = dets(z)
        s = z[1:]
        d = (v[1:] - v[0]) / s
        B = s[:, None] ** np.arange(q)[None, :]
        g = np.concatenate([[v[0]], np.linalg.solve(B, d)])
        return ExchangeProfile(g, q, c)
    if fit != "spread":
        raise ValueError(f"unknown exchange fit {fit!r}")
    # Chebyshev-Lobatto nodes on [0, 1] in t = z / c, endpoints included
    t = 0.5 * (1 - np.cos(np.pi * np.arange(q + 1) / q))
    v = dets(c * t)
    h = np.linalg.solve(t[:, None] ** np.arange(q + 1)[None, :], v)
    h[0] = v[0]
    g = h / float(c) ** np.arange(q + 1)
    return ExchangeProfile(g, q, c)


def exchange_profile(model: ModelSpec, theta, design: DesignExact, i: int, j: int,
                     k_min: int | None = None, fit: str = "spread") -> ExchangeProfile:
    """Exchange profile for the pair ``(i, j)`` (objective on ``w = n / N``).

    Raises
    ------
    SingularDesignError
        If ``design`` has singular information.
    """
    if design.counts[i] + design.counts[j] < 1:
        raise ValueError("need n_i + n_j >= 1")
    obj = _Objective(point_information(model, theta, design.points))
    if not np.isfinite(logdet_psd(obj.info(design.weights))):
        raise SingularDesignError("exchange profile needs a nonsingular design")
    if k_min is None:
        k_min = analyze_rank(model, design.points).k_min
    q = exchange_degree(model.p, model.J, k_min)
    return _exchange_profile_on(obj, design.counts, i, j, q, fit)


@dataclass(frozen=True)
class ExchangeResult:
    """Outcome of an exchange search.

    ``logdet`` refers to the total information ``sum_i n_i F_i``.
    """

    design: DesignExact
    logdet: float
    n_passes: int
    converged: bool
    initial_logdet: float
    seed: int


def _rounded_uniform(n: int, m: int) -> np.ndarray:
    counts = np.full(m, n // m, dtype=np.int64)
    r = n - counts.sum()
    if r:
        counts[np.round(np.linspace(0, m - 1, r)).astype(int)] += 1
    return counts


def _feasible(obj: _Objective, counts: np.ndarray) -> bool:
    w = counts / counts.sum()
    return np.isfinite(logdet_psd(obj.info(w)))


def _repair(obj: _Objective, counts: np.ndarray, n: int) -> np.ndarray:
    """Return ``counts`` if feasible, else a greedy full-rank reallocation."""
    if _feasible(obj, counts):
        return counts
    chosen: list[int] = []
    acc = np.zeros((obj.p, obj.p))
    for _ in range(min(n, obj.m)):
        best, key = None, None
        for k in range(obj.m):
            if k in chosen:
                continue
            A = acc + obj.Fs[k]
            cand = (matrix_rank(A, 1e-10), np.linalg.slogdet(A + 1e-8 * np.eye(obj.p))[1])
            if key is None or cand > key:
                best, key = k, cand
        chosen.append(best)
        acc = acc + obj.Fs[best]
        if key[0] == obj.p:
            break
    out = np.zeros(obj.m, dtype=np.int64)
    out[chosen] = _rounded_uniform(n, len(chosen))
    if not _feasible(obj, out):
        raise InfeasibleDesignError(f"no allocation of {n} runs has nonsingular information")
    return out


def _exchange_run(obj: _Objective, counts: np.ndarray, q: int, config: OptimizerConfig,
                  rng: np.random.Generator) -> tuple[np.ndarray, int, bool]:
    n = counts.copy()
    N = n.sum()
    f = obj.det(n / N)
    pairs = [(i, j) for i in range(obj.m) for j in range(i + 1, obj.m)]
    passes = 0
    while passes < config.max_passes:
        passes += 1
        changed = False
        for k in rng.permutation(len(pairs)):
            i, j = pairs[k]
            c = n[i] + n[j]
            if c == 0:
                continue
            vals = _exchange_profile_on(obj, n, i, j, q, config.exchange_fit).values()
            z = int(np.argmax(vals))
            if z == n[i] or vals[z] <= vals[n[i]]:
                continue
            trial = n.copy()
            trial[i], trial[j] = z, c - z
            f_new = obj.det(trial / N)
            if f_new > f * (1 + EXCHANGE_MARGIN):
                n, f = trial, f_new
                changed = True
        if not changed:
            return n, passes, True
    return n, passes, False


def exchange(model: ModelSpec, theta, points, n: int, init: DesignExact | None = None,
             config: OptimizerConfig | None = None) -> ExchangeResult:
    """Locally D-optimal exact design with ``n`` runs on a candidate set.

    The search starts from ``init`` (default: the rounded uniform allocation,
    repaired if singular) and moves runs between pairs of points while the
    determinant strictly increases. The result is stationary under all
    pairwise exchanges but need not be globally optimal.

    Raises
    ------
    InfeasibleDesignError
        If no allocation of ``n`` runs has nonsingular information.
    """
    config = config or OptimizerConfig()
    pts = _as_points(model, points)
    Fs = point_information(model, theta, pts)
    obj = _Objective(Fs)
    report = analyze_rank(model, pts)
    if not report.pd or n < report.k_min:
        raise InfeasibleDesignError(
            f"candidate set cannot support a nonsingular design with n={n}", report)
    q = exchange_degree(model.p, model.J, report.k_min)
    rng = np.random.default_rng(config.rng_seed)
    if init is None:
        start = _repair(obj, _rounded_uniform(n, obj.m), n)
    else:
        if init.m != obj.m or not np.allclose(init.points, pts):
            raise ValueError("init must use the candidate points")
        start = init.counts.copy()
        n = int(start.sum())
        if not _feasible(obj, start):
            raise InfeasibleDesignError("initial allocation has singular information", report)
    starts = [start]
    for _ in range(config.restarts):
        for _attempt in range(100):
            cand = rng.multinomial(n, np.full(obj.m, 1.0 / obj.m)).astype(np.int64)
            if _feasible(obj, cand):
                starts.append(cand)
                break
    best = None
    for s in starts:
        counts, passes, conv = _exchange_run(obj, s, q, config, rng)
        ld = obj.logdet(counts / n)
        if best is None or ld > best[1]:
            best = (counts, ld, passes, conv)
    counts, ld, passes, conv = best
    plog = model.p * np.log(n)
    return ExchangeResult(DesignExact(pts, counts), ld + plog, passes, conv,
                          obj.logdet(start / n) + plog, config.rng_seed)


# ----------------------------------------------------------------------------
# grids


def grid_points(grid) -> np.ndarray:
    """Cartesian grid from per-factor ``(low, high, step)`` triples.

    Both ends are included when ``high - low`` is a multiple of ``step``.
    """
    axes = []
    for lo, hi, step in grid:
        if step <= 0:
            raise ValueError("grid step must be positive")
        if hi < lo:
            raise ValueError("grid upper bound below lower bound")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(lo + step * np.arange(count))
    return np.array(list(product(*axes)), dtype=float)


def _feasible_mask(model: ModelSpec, thetas: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """``mask[k, i]`` is true when draw ``k`` is feasible at point ``i``."""
    X = model_matrices(model, pts)[:, :-1, :]
    a = np.einsum("mjp,kp->kmj", X, thetas)
    ok = np.isfinite(a).all(axis=-1)
    if model.link.value == "cumulative":
        ok &= (np.diff(a, axis=-1) > 1e-12).all(axis=-1)
    pi = pi_from_eta(model.link, a)
    ok &= (pi >= 1e-300).all(axis=-1)
    return ok


def grid_search(model: ModelSpec, theta, grid, config: OptimizerConfig | None = None
                ) -> LiftOneResult:
    """Lift-one over a grid of candidate points.

    Infeasible grid points are dropped with a warning. ``result.support``
    holds the points that keep positive weight.

    Raises
    ------
    DesignSpaceError
        If every grid point is infeasible.
    """
    pts = grid_points(grid)
    mask = _feasible_mask(model, _as_flat(model, theta)[None, :], pts)[0]
    if not mask.any():
        raise DesignSpaceError("every grid point is infeasible")
    if not mask.all():
        warnings.warn(f"dropped {int((~mask).sum())} infeasible grid points", stacklevel=2)
    return lift_one(model, theta, pts[mask], config)


# ----------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class PriorSample:
    """Draws of the parameter vector, one per row.

    Attributes
    ----------
    thetas : ndarray, shape (k, p)
    feasible : ndarray of bool, shape (k,), optional
        Per-draw feasibility against a candidate set, set by
        :meth:`filter_feasible`.
    """

    thetas: np.ndarray
    feasible: np.ndarray | None = None

    def __post_init__(self):
        th = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        object.__setattr__(self, "thetas", th)

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    def flag(self, model: ModelSpec, points) -> "PriorSample":
        """Copy with ``feasible`` set against every point in ``points``."""
        pts = _as_points(model, points)
        ok = _feasible_mask(model, self.thetas, pts).all(axis=1)
        return PriorSample(self.thetas, ok)

    def filter_feasible(self, model: ModelSpec, points) -> "PriorSample":
        """Keep only draws feasible at every point, warning about the rest."""
        flagged = self.flag(model, points)
        dropped = int((~flagged.feasible).sum())
        if dropped:
            warnings.warn(f"dropped {dropped} of {self.size} prior draws infeasible at the "
                          "candidate points", stacklevel=2)
        kept = flagged.thetas[flagged.feasible]
        return PriorSample(kept, np.ones(kept.shape[0], dtype=bool))


def _map_draws(fn, thetas: np.ndarray) -> list:
    workers = min(_threads(), max(1, thetas.shape[0]))
    if workers == 1:
        return [fn(t) for t in thetas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, thetas))


def _expected_u(model: ModelSpec, thetas: np.ndarray, pts: np.ndarray) -> np.ndarray:
    X = model_matrices(model, pts)[:, :-1, :]

    def one(theta):
        return compute_u(model.link, pi_from_eta(model.link, X @ theta))

    return np.mean(_map_draws(one, thetas), axis=0)


def ew_information(model: ModelSpec, prior: PriorSample, x) -> np.ndarray:
    """Expected per-point information ``X^T E(U) X`` at a single point.

    Draws infeasible at ``x`` are left out of the average.

    Raises
    ------
    DesignSpaceError
        If no draw is feasible at ``x``.
    """
    pts = _as_points(model, np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))
    ok = _feasible_mask(model, prior.thetas, pts)[:, 0]
    if not ok.any():
        raise DesignSpaceError(f"no prior draw is feasible at {pts[0].tolist()}")
    EU = _expected_u(model, prior.thetas[ok], pts)
    return information_from_u(model_matrices(model, pts), EU)[0]


def ew_lift_one(model: ModelSpec, prior: PriorSample, points,
                config: OptimizerConfig | None = None) -> LiftOneResult:
    """EW D-optimal approximate design: lift-one on ``E F_i`` over the prior.

    Draws infeasible at any candidate point are dropped with a warning.
    """
    config = config or OptimizerConfig()
    pts = _as_points(model, points)
    kept = prior.filter_feasible(model, pts)
    if kept.size == 0:
        raise DesignSpaceError("no prior draw is feasible at all candidate points")
    EU = _expected_u(model, kept.thetas, pts)
    Fs = information_from_u(model_matrices(model, pts), EU)
    return _lift_one_stack(Fs, pts, model.J, config, lambda: analyze_rank(model, pts))


def design_logdet(model: ModelSpec, theta, design) -> float:
    """Log-determinant of the normalized information ``sum_i w_i F_i``."""
    w = np.asarray(design.weights, dtype=float)
    keep = w > 0
    Fs = point_information(model, theta, design.points[keep])
    return logdet_psd(np.tensordot(w[keep], Fs, axes=1))


def bayesian_objective(model: ModelSpec, prior: PriorSample, design) -> float:
    """Mean over prior draws of ``log|F(w, theta)|``.

    Draws infeasible at a support point are skipped with a warning. Draws
    with singular information contribute ``-inf``, which is reported and
    propagates to the result.
    """
    keep = np.asarray(design.weights) > 0
    pts = design.points[keep]
    kept = prior.filter_feasible(model, pts)
    if kept.size == 0:
        raise DesignSpaceError("no prior draw is feasible at the design points")
    lds = np.array(_map_draws(lambda t: design_logdet(model, t, design), kept.thetas))
    bad = int(np.sum(~np.isfinite(lds)))
    if bad:
        warnings.warn(f"{bad} prior draws give singular information", stacklevel=2)
        return -np.inf
    return float(np.mean(lds))


def efficiency(model: ModelSpec, theta, design_target, design_reference) -> float:
    """D-efficiency ``exp((logdet_target - logdet_reference) / p)``.

    Both designs are compared per run (weights ``n_i / n`` for exact
    designs). Returns 0 for a singular target.

    Raises
    ------
    SingularDesignError
        If the reference design is singular.
    """
    ref = design_logdet(model, theta, design_reference)
    if not np.isfinite(ref):
        raise SingularDesignError("reference design has singular information")
    tgt = design_logdet(model, theta, design_target)
    if not np.isfinite(tgt):
        return 0.0
    return float(np.exp((tgt - ref) / model.p))
