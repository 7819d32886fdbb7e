"""Closed-form results for minimally supported designs.

For three-point designs of the quadratic/linear three-category models the
determinant factors as ``C * w1 w2 w3 (c1 w2 w3 + c2 w1 w3 + c3 w1 w2)``, and
the maximizing weights have explicit formulas.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import UnsupportedModelError
from .fisher import analyze_rank, point_probabilities
from .model import LinkKind, ModelSpec, OddsStructure, PredictorSpec

__all__ = [
    "ThreePointProblem",
    "UniformVerdict",
    "three_point_objective",
    "three_point_coefficients",
    "solve_three_point",
    "uniform_minimal_verdict",
]

EQUAL_RTOL = 1e-12


@dataclass(frozen=True)
class ThreePointProblem:
    """Coefficients ``0 < c1 <= c2 <= c3`` of a three-point objective."""

    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        c = (float(self.c1), float(self.c2), float(self.c3))
        if not all(np.isfinite(v) and v > 0 for v in c):
            raise ValueError("coefficients must be positive")
        if not c[0] <= c[1] <= c[2]:
            raise ValueError("coefficients must be sorted ascending")

    @classmethod
    def from_unsorted(cls, c1, c2, c3) -> tuple["ThreePointProblem", np.ndarray]:
        """Sort the coefficients; also return the permutation used."""
        c = np.array([c1, c2, c3], dtype=float)
        order = np.argsort(c, kind="stable")
        return cls(*c[order]), order


def three_point_objective(c, w) -> float:
    """``w1 w2 w3 (c1 w2 w3 + c2 w1 w3 + c3 w1 w2)``."""
    c1, c2, c3 = c
    w1, w2, w3 = w
    return w1 * w2 * w3 * (c1 * w2 * w3 + c2 * w1 * w3 + c3 * w1 * w2)


def _is_three_point_family(model: ModelSpec) -> bool:
    quad = PredictorSpec.polynomial(2)
    lin = PredictorSpec.polynomial(1)
    return (model.d == 1 and model.J == 3 and model.odds is OddsStructure.NPO
            and model.h == (quad, lin))


def three_point_coefficients(model: ModelSpec, theta, x1, x2, x3):
    """Constants ``(C, c1, c2, c3)`` of the three-point determinant.

    Supported models have one factor, three categories, non-proportional odds
    with ``h_1 = (1, x, x^2)`` and ``h_2 = (1, x)``, and a continuation-ratio
    or cumulative link. Then ``det F(w) = C w1 w2 w3 (c1 w2 w3 + c2 w1 w3 +
    c3 w1 w2)``.

    Raises
    ------
    UnsupportedModelError
        For any other model.
    ValueError
        If the points are not distinct.
    """
    if not _is_three_point_family(model) or model.link not in (
            LinkKind.CONTINUATION, LinkKind.CUMULATIVE):
        raise UnsupportedModelError(
            "three-point coefficients are available only for the continuation-ratio and "
            "cumulative npo models with h1 = (1, x, x^2), h2 = (1, x)")
    x = np.array([x1, x2, x3], dtype=float).ravel()
    if np.unique(x).size != 3:
        raise ValueError("points must be distinct")
    pi = point_probabilities(model, theta, x)
    gaps = np.array([(x[1] - x[2]) ** 2, (x[0] - x[2]) ** 2, (x[0] - x[1]) ** 2])
    vand = np.prod(gaps)
    if model.link is LinkKind.CONTINUATION:
        C = vand * np.prod(pi)
        c = gaps * (1.0 / pi[:, 1] + 1.0 / pi[:, 2])
    else:
        p1, p2, p3 = pi.T
        C = vand * np.prod(p1 / p2 * p3 * (p1 + p2) ** 2 * (p2 + p3) ** 2)
        c = gaps / (p3 * (p1 + p2))
    return float(C), float(c[0]), float(c[1]), float(c[2])


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= EQUAL_RTOL * max(abs(a), abs(b))


def _quartic(c1: float, c2: float, c3: float) -> np.ndarray:
    """Monic coefficients ``(a3, a2, a1, a0)`` of the ratio ``y1 = w1 / w3``."""
    a0 = c1 ** 2 / c3 ** 2
    a1 = 4 * c1 * (-2 * c1 + c2 + 2 * c3) / (3 * c3 ** 2)
    a2 = 2 * (2 * c1 ** 2 - 2 * c1 * c2 - 7 * c1 * c3 - 2 * c2 * c3 + 2 * c3 ** 2) / (3 * c3 ** 2)
    a3 = 4 * (2 * c1 + c2 - 2 * c3) / (3 * c3)
    return np.array([a3, a2, a1, a0])


def _quartic_closed_form(a3, a2, a1, a0) -> list[complex]:
    """Candidate roots from the explicit quartic formula, in complex arithmetic.

    The first entry is the formula's principal root; the rest flip the signs
    of the two square roots, for use when branch choices go astray.
    """
    E = 12 * a0 + a2 ** 2 - 3 * a1 * a3
    F = 27 * a1 ** 2 - 72 * a0 * a2 + 2 * a2 ** 3 - 9 * a1 * a2 * a3 + 27 * a0 * a3 ** 2
    disc = np.sqrt(complex(F * F - 4 * E ** 3))
    u = (F + disc) ** (1 / 3) if abs(F + disc) >= abs(F - disc) else (F - disc) ** (1 / 3)
    # the two cube roots must multiply to 2^(2/3) E for the sum to be a root
    v = 2 ** (2 / 3) * E / u if u != 0 else 0j
    G = u + v
    k = 3 * 2 ** (1 / 3)
    A = -2 * a2 / 3 + a3 ** 2 / 4 + G / k
    sA = np.sqrt(complex(A))
    out = []
    for sa in (sA, -sA):
        if sa == 0:
            continue
        Cc = -4 * a2 / 3 + a3 ** 2 / 2 - G / k + (-8 * a1 + 4 * a2 * a3 - a3 ** 3) / (4 * sa)
        sC = np.sqrt(complex(Cc))
        out.extend([-a3 / 4 + sa / 2 + sC / 2, -a3 / 4 + sa / 2 - sC / 2])
    return out


def _ratio_root(c1: float, c2: float, c3: float) -> float:
    a3, a2, a1, a0 = _quartic(c1, c2, c3)

    def h(y):
        return (((y + a3) * y + a2) * y + a1) * y + a0

    def good(y):
        scale = 1 + abs(a3) * abs(y) ** 3 + abs(a2) * abs(y) ** 2 + abs(a1) * abs(y) + abs(a0)
        return (abs(y.imag) <= 1e-9 * max(1.0, abs(y)) and y.real > 1.0
                and abs(h(y.real)) <= 1e-9 * (scale + abs(y) ** 4))

    for y in _quartic_closed_form(a3, a2, a1, a0):
        if np.isfinite(y) and good(y):
            return float(y.real)
    warnings.warn("closed-form quartic root failed checks; using polynomial roots",
                  RuntimeWarning, stacklevel=3)
    roots = np.roots([1.0, a3, a2, a1, a0])
    real = roots[(np.abs(roots.imag) <= 1e-8 * np.maximum(1, np.abs(roots))) & (roots.real > 1)]
    if real.size != 1:
        raise ArithmeticError("quartic does not have a unique root above 1")
    return float(real[0].real)


def solve_three_point(problem: ThreePointProblem) -> tuple[float, float, float]:
    """Weights maximizing ``w1 w2 w3 (c1 w2 w3 + c2 w1 w3 + c3 w1 w2)``.

    Parameters
    ----------
    problem : ThreePointProblem

    Returns
    -------
    tuple of float
        ``(w1, w2, w3)`` with ``w1 >= w2 >= w3 > 0`` summing to one.

    Examples
    --------
    >>> solve_three_point(ThreePointProblem(1.0, 1.0, 4.0))
    (0.375, 0.375, 0.25)
    """
    c1, c2, c3 = problem.c1, problem.c2, problem.c3
    e12, e23 = _close(c1, c2), _close(c2, c3)
    if e12 and e23:
        return (1 / 3, 1 / 3, 1 / 3)
    if e12:
        delta = np.sqrt(4 * c1 ** 2 - c1 * c3 + c3 ** 2)
        D = -4 * c1 + 3 * c3 + 2 * delta
        w = (-2 * c1 + c3 + delta) / D
        return (float(w), float(w), float(c3 / D))
    if e23:
        delta = np.sqrt(c1 ** 2 - c1 * c3 + 4 * c3 ** 2)
        D = -c1 + 8 * c3 + delta
        return (float((-c1 + 2 * c3 + delta) / D), float(3 * c3 / D), float(3 * c3 / D))
    y1 = _ratio_root(c1, c2, c3)
    y2 = 2 * c2 * (1 - y1) * y1 / (c3 * y1 ** 2 - 2 * (c3 - c1) * y1 - c1)
    s = y1 + y2 + 1
    return (y1 / s, y2 / s, 1 / s)


class UniformVerdict(str, Enum):
    UNIFORM_OPTIMAL = "uniform-optimal"
    NOT_GUARANTEED = "not-guaranteed"


def uniform_minimal_verdict(model: ModelSpec, points) -> UniformVerdict:
    """Whether the uniform design is D-optimal among designs on ``points``.

    ``points`` should hold exactly ``k_min`` distinct points. The verdict is
    positive for two categories with ``m = p`` and for npo models whose
    blocks all have the same size and full rank at the points.
    """
    report = analyze_rank(model, points)
    m = np.asarray(points, dtype=float).reshape(-1, model.d).shape[0]
    if model.J == 2 and m == model.p and report.pd:
        return UniformVerdict.UNIFORM_OPTIMAL
    if (model.odds is OddsStructure.NPO and len(set(model.p_blocks)) == 1
            and report.ranks_h == model.p_blocks and m == model.p_blocks[0]):
        return UniformVerdict.UNIFORM_OPTIMAL
    return UniformVerdict.NOT_GUARANTEED
