import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from baysmm.classify import (GlcModel, SingularCovarianceError, class_log_likelihoods,
                             glc_train, glcu_e_step, glcu_m_step, glcu_train,
                             marginal_log_likelihood, predict)
from baysmm.synthetic import heteroscedastic_embeddings


@pytest.fixture(scope="module")
def hetero():
    return heteroscedastic_embeddings(n_per_class=150, L=3, K=6, seed=4)


class TestGlc:
    def test_singletons_with_reg(self):
        m = glc_train([[0.0, 0.0], [2.0, 0.0]], [0, 1], reg=1.0)
        np.testing.assert_allclose(m.M, [[0.0, 2.0], [0.0, 0.0]])
        np.testing.assert_allclose(m.covariance, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(np.exp(m.log_priors), [0.5, 0.5])

    def test_zero_scatter_is_singular(self):
        with pytest.raises(SingularCovarianceError, match="reg"):
            glc_train([[1.0, 1.0], [1.0, 1.0], [3.0, 0.0]], [0, 0, 1])

    def test_duplication_invariance(self, hetero):
        nu, _, labels = hetero
        a = glc_train(nu, labels)
        b = glc_train(np.vstack([nu, nu]), np.concatenate([labels, labels]))
        np.testing.assert_allclose(b.M, a.M, rtol=1e-12)
        np.testing.assert_allclose(b.D_prec, a.D_prec, rtol=1e-10)
        np.testing.assert_allclose(b.log_priors, a.log_priors, rtol=1e-12)

    def test_ml_pooled_covariance(self):
        X = np.array([[0.0], [2.0], [10.0], [14.0]])
        m = glc_train(X, [0, 0, 1, 1])
        # residuals -1, 1, -2, 2 over D_total = 4
        np.testing.assert_allclose(m.covariance, [[2.5]])

    def test_empty_class(self):
        with pytest.raises(ValueError):
            glc_train(np.zeros((2, 1)), [0, 2], L=3)

    def test_uniform_priors(self):
        m = glc_train([[0.0], [1.0], [2.0], [5.0]], [0, 0, 0, 1], priors="uniform")
        np.testing.assert_allclose(m.log_priors, np.log([0.5, 0.5]))

    def test_consistency(self):
        rng = np.random.default_rng(0)
        n, K = 10_000, 3
        mus = np.array([[0.0, 1.0, -2.0], [3.0, -1.0, 0.5]])
        A = rng.normal(size=(K, K))
        cov = A @ A.T + np.eye(K)
        X = np.vstack([rng.multivariate_normal(mu, cov, size=n) for mu in mus])
        m = glc_train(X, np.repeat([0, 1], n))
        sigma = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(m.M.T - mus) < 3 * sigma)


class TestEStep:
    def test_scalar_example(self):
        model = GlcModel(np.zeros((1, 1)), np.eye(1), np.zeros(1))
        lp = glcu_e_step(model, [2.0], [1.0], [0.0])
        np.testing.assert_allclose(lp.u, [1.0])
        np.testing.assert_allclose(lp.V_prec, [[2.0]])

    def test_infinite_precision_limit(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(4, 4))
        model = GlcModel(np.zeros((4, 1)), A @ A.T + np.eye(4), np.zeros(1))
        resid = rng.normal(size=4)
        lp = glcu_e_step(model, resid, np.full(4, 1e8), np.zeros(4))
        assert np.linalg.norm(lp.u) <= 1e-6 * np.linalg.norm(resid)

    def test_zero_residual(self):
        model = GlcModel(np.zeros((3, 1)), 2 * np.eye(3), np.zeros(1))
        lp = glcu_e_step(model, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert np.all(lp.u == 0.0)

    def test_matches_textbook_form(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 3))
        D = A @ A.T + np.eye(3)
        g = rng.uniform(0.1, 3.0, size=3)
        r = rng.normal(size=3)
        lp = glcu_e_step(GlcModel(np.zeros((3, 1)), D, np.zeros(1)), r, g, np.zeros(3))
        u_ref = np.linalg.solve(np.eye(3) + np.linalg.inv(D) @ np.diag(g), r)
        np.testing.assert_allclose(lp.u, u_ref, rtol=1e-10)

    def test_non_pd_gamma(self):
        model = GlcModel(np.zeros((2, 1)), np.eye(2), np.zeros(1))
        with pytest.raises(ValueError):
            glcu_e_step(model, [0.0, 0.0], [1.0, 0.0], [0.0, 0.0])


class TestMStep:
    def test_degenerate_latent_is_glc(self, hetero):
        nu, _, labels = hetero
        M, cov = glcu_m_step(nu, np.zeros_like(nu), np.zeros((6, 6)), labels, 3)
        glc = glc_train(nu, labels)
        np.testing.assert_allclose(M, glc.M, rtol=1e-12)
        np.testing.assert_allclose(cov, glc.covariance, rtol=1e-9)

    def test_single_class_mean(self):
        nu = np.array([[1.0, 0.0], [3.0, 4.0]])
        M, _ = glcu_m_step(nu, np.zeros_like(nu), np.zeros((2, 2)), [0, 0], 1)
        np.testing.assert_allclose(M[:, 0], [2.0, 2.0])

    def test_two_doc_hand_sum(self):
        nu = np.array([[1.0], [3.0]])
        u = np.array([[0.5], [1.0]])
        M, cov = glcu_m_step(nu, u, np.array([[0.2]]), [0, 0], 1)
        # mu = mean(0.5, 2.0) = 1.25; a = (0.75, -0.75)
        np.testing.assert_allclose(M, [[1.25]])
        np.testing.assert_allclose(cov, [[(2 * 0.5625 + 0.2) / 2]])


class TestGlcuTrain:
    def test_monotone_over_50_iterations(self, hetero):
        nu, gamma, labels = hetero
        model = glcu_train(nu, gamma, labels, em_iters=50)
        tr = np.array(model.ll_trace)
        assert len(tr) == 51
        assert np.all(np.diff(tr) >= -1e-9)
        assert tr[-1] > tr[0]

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 3))
    def test_monotone_arbitrary_inputs(self, seed, K, L):
        rng = np.random.default_rng(seed)
        n = 8 * L
        nu = rng.normal(size=(n, K)) * rng.uniform(0.1, 5.0)
        gamma = np.exp(rng.uniform(-4, 4, size=(n, K)))
        labels = np.arange(n) % L
        tr = np.array(glcu_train(nu, gamma, labels, em_iters=8).ll_trace)
        assert np.all(np.diff(tr) >= -1e-9)

    def test_infinite_precision_reproduces_glc(self, hetero):
        nu, _, labels = hetero
        glcu = glcu_train(nu, np.full(nu.shape, 1e8), labels, em_iters=5)
        glc = glc_train(nu, labels)
        np.testing.assert_allclose(glcu.M, glc.M, atol=1e-4)
        np.testing.assert_allclose(glcu.covariance, glc.covariance, atol=1e-4)

    def test_zero_iterations_rejected(self, hetero):
        nu, gamma, labels = hetero
        with pytest.raises(ValueError):
            glcu_train(nu, gamma, labels, em_iters=0)

    def test_marginal_likelihood_oracle(self, hetero):
        nu, gamma, labels = hetero
        model = glc_train(nu, labels)
        got = marginal_log_likelihood(model, nu[:20], labels[:20], gamma[:20])
        ref = sum(multivariate_normal(model.M[:, l], model.covariance + np.diag(1 / g)).logpdf(x)
                  for x, g, l in zip(nu[:20], gamma[:20], labels[:20]))
        assert got == pytest.approx(ref, rel=1e-12)


class TestPredict:
    def test_symmetric_classes(self):
        model = GlcModel([[-1.0, 1.0], [0.0, 0.0]], np.eye(2), np.log([0.5, 0.5]))
        _, post = predict(model, [[0.0, 3.0]])
        np.testing.assert_allclose(post, [[0.5, 0.5]], rtol=1e-15)

    def test_tie_breaks_low(self):
        model = GlcModel([[-1.0, 1.0]], np.eye(1), np.log([0.5, 0.5]))
        ids, _ = predict(model, [[0.0]])
        assert ids[0] == 0

    def test_own_mean_wins(self):
        rng = np.random.default_rng(3)
        M = rng.normal(size=(4, 5))
        model = GlcModel(M, np.eye(4) * 3.0, np.full(5, -np.log(5)))
        ids, _ = predict(model, M.T)
        np.testing.assert_array_equal(ids, np.arange(5))

    def test_uncertainty_pulls_towards_prior(self):
        model = GlcModel([[-1.0, 1.0]], np.eye(1), np.log([0.3, 0.7]))
        x = [[-0.8]]
        _, p_glc = predict(model, x)
        _, p_glcu = predict(model, x, gamma=[[0.25]])
        prior = np.exp(model.log_priors)
        assert np.abs(p_glcu - prior).sum() < np.abs(p_glc - prior).sum()

    def test_matches_scipy(self, hetero):
        nu, gamma, labels = hetero
        model = glc_train(nu, labels)
        ll = class_log_likelihoods(model, nu[:5], gamma[:5])
        for d in range(5):
            for l in range(3):
                cov = model.covariance + np.diag(1 / gamma[d])
                ref = multivariate_normal(model.M[:, l], cov).logpdf(nu[d])
                assert ll[d, l] == pytest.approx(ref, rel=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=4), st.floats(-100, 100))
    def test_sums_to_one_and_shift_invariant(self, lp, c):
        L = len(lp)
        model = GlcModel(np.arange(L, dtype=float)[None, :], np.eye(1), np.zeros(L))
        lp = np.asarray(lp)
        _, a = predict(model, [[0.3]], log_priors=lp)
        _, b = predict(model, [[0.3]], log_priors=lp + c)
        assert abs(a.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(a, b, atol=1e-12)
