import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from optdesign.errors import DesignSpaceError
from optdesign.model import (
    CategoryProbabilities,
    LinkKind,
    ModelSpec,
    OddsStructure,
    ParameterVector,
    PredictorSpec,
    build_model_matrix,
    cdl_inverse_columns,
    cdl_matrix,
    compute_pi,
    compute_u,
    evaluate_predictors,
    link_constants,
    linear_predictors,
    pi_from_eta,
    validate_design_point,
)

from helpers import probs_by_hand

links = st.sampled_from(list(LinkKind))


@st.composite
def link_and_eta(draw):
    link = draw(links)
    k = draw(st.integers(1, 5))
    a = draw(arrays(float, k, elements=st.floats(-6, 6)))
    if link is LinkKind.CUMULATIVE:
        a = np.sort(a) + 0.05 * np.arange(k)
    return link, a


class TestPredictors:
    def test_intercept_is_one(self):
        spec = PredictorSpec(((0, 0), (1, 0), (1, 2)))
        np.testing.assert_allclose(evaluate_predictors(spec, [3.0, 2.0]), [1.0, 3.0, 12.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_predictors(PredictorSpec.polynomial(2), [1.0, 2.0])

    def test_negative_exponent_rejected(self):
        with pytest.raises(ValueError):
            PredictorSpec(((-1,),))

    def test_odds_structure(self):
        lin = PredictorSpec.polynomial(1)
        assert ModelSpec.npo("cumulative", 3, lin).odds is OddsStructure.NPO
        assert ModelSpec.po("cumulative", 3, PredictorSpec(((1,),))).odds is OddsStructure.PO
        ppo = ModelSpec(2, 3, "baseline", (PredictorSpec.linear(2, factors=[1]),) * 2,
                        PredictorSpec.linear(2, intercept=False, factors=[0]))
        assert ppo.odds is OddsStructure.PPO
        assert ppo.p == 2 * 2 + 1

    def test_block_count_checked(self):
        with pytest.raises(ValueError):
            ModelSpec(1, 3, "baseline", (PredictorSpec.polynomial(1),))


class TestModelMatrix:
    def test_layout_ppo(self):
        model = ModelSpec(2, 3, "adjacent", (PredictorSpec.linear(2, factors=[1]),) * 2,
                          PredictorSpec.linear(2, intercept=False, factors=[0]))
        X = build_model_matrix(model, [5.0, 7.0])
        expected = np.array([
            [1, 7, 0, 0, 5],
            [0, 0, 1, 7, 5],
            [0, 0, 0, 0, 0],
        ], dtype=float)
        np.testing.assert_array_equal(X, expected)

    def test_po_has_unit_intercepts(self):
        model = ModelSpec.po("cumulative", 4, PredictorSpec(((1,),)))
        X = build_model_matrix(model, [2.5])
        np.testing.assert_array_equal(X[:3, :3], np.eye(3))
        np.testing.assert_array_equal(X[:3, 3], 2.5)

    def test_parameter_vector_round_trip(self, trauma_example):
        pv = ParameterVector.from_flat(trauma_example.model, trauma_example.theta)
        assert len(pv.beta_blocks) == 4
        np.testing.assert_array_equal(pv.flat, trauma_example.theta)


class TestProbabilities:
    @given(link_and_eta())
    def test_matches_hand_written_links(self, case):
        link, a = case
        np.testing.assert_allclose(pi_from_eta(link, a), probs_by_hand(link, a), rtol=1e-10)

    @given(link_and_eta())
    def test_satisfies_logit_identity(self, case):
        link, a = case
        pi = pi_from_eta(link, a)
        lc = link_constants(link, a.size + 1)
        eta = lc.Ct @ np.log(lc.L @ pi)
        np.testing.assert_allclose(eta[:-1], a, atol=1e-10)
        assert abs(eta[-1]) < 1e-12
        assert abs(pi.sum() - 1) < 1e-12

    def test_trauma_linear_predictors(self, trauma_example):
        a = linear_predictors(trauma_example.model, trauma_example.theta, 1.0).a
        np.testing.assert_allclose(a, [-0.978, -0.363, 0.524, 1.790], atol=1e-12)

    def test_trauma_design_space_edge(self, trauma_example):
        # the feasible range of doses ends just below 4.942
        m, th = trauma_example.model, trauma_example.theta
        assert validate_design_point(m, th, 4.94).feasible
        verdict = validate_design_point(m, th, 4.95)
        assert not verdict.feasible
        assert verdict.violated_pair == (1, 2)
        assert validate_design_point(m, th, 0.0).feasible

    def test_infeasible_point_raises(self, trauma_example):
        with pytest.raises(DesignSpaceError) as info:
            compute_pi(trauma_example.model, trauma_example.theta, 6.0)
        assert info.value.verdict.violated_pair is not None

    def test_extreme_eta_is_clamped(self):
        pi = pi_from_eta(LinkKind.BASELINE, [1e6, -1e6])
        assert np.all(np.isfinite(pi))

    def test_gamma_complement(self):
        cp = CategoryProbabilities.from_pi([0.2, 0.3, 0.5])
        np.testing.assert_allclose(cp.gamma, [0.2, 0.5])
        np.testing.assert_allclose(cp.gamma_c, [0.8, 0.5])


class TestClosedForms:
    @given(link_and_eta())
    def test_columns_invert_explicit_matrix(self, case):
        link, a = case
        pi = pi_from_eta(link, a)
        cols = cdl_inverse_columns(link, pi)
        np.testing.assert_allclose(cols @ cdl_matrix(link, pi), np.eye(pi.size), atol=1e-9)

    @given(link_and_eta())
    def test_column_sums(self, case):
        link, a = case
        pi = pi_from_eta(link, a)
        cols = cdl_inverse_columns(link, pi)
        np.testing.assert_allclose(cols[:, -1], pi, atol=1e-15)
        np.testing.assert_allclose(cols.sum(axis=0)[:-1], 0.0, atol=1e-12)

    @given(link_and_eta())
    def test_u_matches_quadratic_form(self, case):
        link, a = case
        pi = pi_from_eta(link, a)
        inv = np.linalg.inv(cdl_matrix(link, pi))
        direct = inv.T @ (inv / pi[:, None])
        k = pi.size - 1
        np.testing.assert_allclose(compute_u(link, pi), direct[:k, :k], atol=1e-10)

    def test_sparsity(self):
        a = np.array([-1.0, 0.0, 0.5, 2.0])
        U = compute_u(LinkKind.CUMULATIVE, pi_from_eta(LinkKind.CUMULATIVE, a))
        assert np.all(np.triu(U, 2) == 0)
        U = compute_u(LinkKind.CONTINUATION, pi_from_eta(LinkKind.CONTINUATION, a))
        assert np.all(U == np.diag(np.diag(U)))

    @pytest.mark.parametrize("link", list(LinkKind))
    def test_determinants(self, link):
        a = np.array([-0.7, 0.2, 1.1])
        pi = pi_from_eta(link, a)
        cp = CategoryProbabilities.from_pi(pi)
        g, gc = cp.gamma, cp.gamma_c
        if link is LinkKind.CUMULATIVE:
            det_cdl = np.prod(1 / (g * gc))
            det_u = np.prod(g ** 2 * gc ** 2 / pi[:-1]) / pi[-1]
        else:
            det_cdl = np.prod(1 / pi)
            det_u = np.prod(pi)
        np.testing.assert_allclose(np.linalg.det(cdl_matrix(link, pi)), det_cdl, rtol=1e-10)
        np.testing.assert_allclose(np.linalg.det(compute_u(link, pi)), det_u, rtol=1e-10)

    def test_u_batched(self):
        a = np.array([[-1.0, 1.0], [0.0, 0.3]])
        pis = pi_from_eta(LinkKind.ADJACENT, a)
        batch = compute_u(LinkKind.ADJACENT, pis)
        for k in range(2):
            np.testing.assert_allclose(batch[k], compute_u(LinkKind.ADJACENT, pis[k]))
