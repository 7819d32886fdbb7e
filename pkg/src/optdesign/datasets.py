"""Two worked examples used throughout the docs and tests.

``flies``
    Emergence of house flies after gamma irradiation. Three ordered outcomes
    (died before opening, died during, emerged), continuation-ratio link,
    quadratic dose effect for the first ratio and linear for the second.
``trauma``
    Traumatic brain injury outcome (five ordered levels) against four
    treatment severities, cumulative link with a linear effect per category.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinkKind, ModelSpec, PredictorSpec

__all__ = ["Example", "flies", "trauma"]


@dataclass(frozen=True)
class Example:
    model: ModelSpec
    theta: np.ndarray
    points: np.ndarray
    allocation: np.ndarray | None = None


def flies() -> Example:
    model = ModelSpec(
        d=1, J=3, link=LinkKind.CONTINUATION,
        h=(PredictorSpec.polynomial(2), PredictorSpec.polynomial(1)),
    )
    theta = np.array([-1.935, -0.02642, 0.0003174, -9.159, 0.06386])
    points = np.arange(80.0, 201.0, 20.0)
    return Example(model, theta, points)


def trauma() -> Example:
    model = ModelSpec.npo(LinkKind.CUMULATIVE, 5, PredictorSpec.polynomial(1))
    theta = np.array([-0.865, -0.113, -0.094, -0.269, 0.706, -0.182, 1.909, -0.119])
    points = np.array([1.0, 2.0, 3.0, 4.0])
    return Example(model, theta, points, np.array([210, 190, 207, 195]))
