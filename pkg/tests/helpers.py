"""Random model instances and brute-force references shared by the tests."""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space

from optdesign.fisher import point_probabilities
from optdesign.model import LinkKind, ModelSpec, OddsStructure, PredictorSpec

LINKS = list(LinkKind)
ODDS = list(OddsStructure)


def random_model(rng, link, odds, J=None, d=None) -> ModelSpec:
    J = int(rng.integers(2, 5)) if J is None else J
    d = int(rng.integers(1, 3)) if d is None else d
    if odds is OddsStructure.PPO:
        d = max(d, 2)
    if odds is OddsStructure.PO:
        return ModelSpec.po(link, J, PredictorSpec.linear(d, intercept=False), d=d)
    if odds is OddsStructure.NPO:
        blocks = []
        for _ in range(J - 1):
            n_fac = int(rng.integers(1, d + 1))
            fac = sorted(rng.choice(d, n_fac, replace=False).tolist())
            blocks.append(PredictorSpec.linear(d, factors=fac))
        return ModelSpec(d, J, link, tuple(blocks))
    # partial odds: category intercepts, first factor shared, others per category
    hc = PredictorSpec.linear(d, intercept=False, factors=[0])
    blocks = tuple(PredictorSpec.linear(d, factors=list(range(1, d))) for _ in range(J - 1))
    return ModelSpec(d, J, link, blocks, hc)


def random_theta(rng, model: ModelSpec) -> np.ndarray:
    """Parameters with small slopes and increasing intercepts.

    The intercept gaps exceed the largest slope effect on [-1, 1]^d, which
    keeps cumulative models feasible there.
    """
    theta = rng.normal(scale=0.3, size=model.p)
    off = model.offsets
    intercepts = np.cumsum(rng.uniform(1.5, 2.5, model.J - 1)) - model.J
    for j, spec in enumerate(model.h):
        for k, term in enumerate(spec.terms):
            if not any(term):
                theta[off[j] + k] = intercepts[j]
    return theta


def random_points(rng, model: ModelSpec, m: int) -> np.ndarray:
    return rng.uniform(-1, 1, size=(m, model.d))


def random_instance(rng, link, odds, m=None):
    """A feasible (model, theta, points) triple whose uniform design is nonsingular."""
    from optdesign.fisher import analyze_rank

    for _ in range(200):
        model = random_model(rng, link, odds)
        theta = random_theta(rng, model)
        k = m if m is not None else int(rng.integers(model.p, model.p + 4))
        pts = random_points(rng, model, k)
        try:
            point_probabilities(model, theta, pts)
        except ValueError:
            continue
        if analyze_rank(model, pts).pd:
            return model, theta, pts
    raise RuntimeError("could not draw a feasible instance")


def nullspace_intersection_dim(matrices) -> int:
    """dim of the intersection of row spaces as m - rank(stacked complements)."""
    m = matrices[0].shape[1]
    comps = [null_space(np.atleast_2d(A), rcond=1e-9).T for A in matrices]
    stacked = np.vstack(comps) if comps else np.zeros((0, m))
    if stacked.shape[0] == 0:
        return m
    return m - np.linalg.matrix_rank(stacked, tol=1e-9 * max(1.0, np.abs(stacked).max()))


def probs_by_hand(link, a) -> np.ndarray:
    """Category probabilities written out link by link, one point at a time."""
    a = np.asarray(a, dtype=float)
    k = a.size
    if link is LinkKind.BASELINE:
        e = np.append(np.exp(a), 1.0)
        return e / e.sum()
    if link is LinkKind.CUMULATIVE:
        g = np.append(1 / (1 + np.exp(-a)), 1.0)
        return np.diff(np.concatenate([[0.0], g]))
    if link is LinkKind.ADJACENT:
        logs = [sum(a[j:]) for j in range(k)] + [0.0]
        e = np.exp(logs)
        return e / e.sum()
    out, rest = [], 1.0
    for j in range(k):
        s = 1 / (1 + np.exp(-a[j]))
        out.append(rest * s)
        rest *= 1 - s
    out.append(rest)
    return np.array(out)


def fisher_by_jacobian(model: ModelSpec, theta, x) -> np.ndarray:
    """``(d pi / d theta)^T diag(pi)^-1 (d pi / d theta)`` by central differences."""
    from optdesign.model import build_model_matrix

    X = build_model_matrix(model, x)[:-1]
    theta = np.asarray(theta, dtype=float)

    def pi(t):
        return probs_by_hand(model.link, X @ t)

    h = 1e-6
    jac = np.array([(pi(theta + h * e) - pi(theta - h * e)) / (2 * h)
                    for e in np.eye(theta.size)]).T
    return jac.T @ (jac / pi(theta)[:, None])


def three_point_oracle(c) -> np.ndarray:
    """Maximize ``w1 w2 w3 (c1 w2 w3 + c2 w1 w3 + c3 w1 w2)`` by BFGS on softmax weights."""
    from scipy.optimize import minimize

    c = np.asarray(c, dtype=float)

    def neg(v):
        w = np.exp(np.append(v, 0.0))
        w /= w.sum()
        s = c[0] * w[1] * w[2] + c[1] * w[0] * w[2] + c[2] * w[0] * w[1]
        gw = 1 / w + np.array([c[1] * w[2] + c[2] * w[1], c[0] * w[2] + c[2] * w[0],
                               c[0] * w[1] + c[1] * w[0]]) / s
        g = w * (gw - w @ gw)
        return -(np.log(w).sum() + np.log(s)), -g[:2]

    x = minimize(neg, np.zeros(2), jac=True, method="BFGS", options={"gtol": 1e-13}).x
    w = np.exp(np.append(x, 0.0))
    return w / w.sum()
