import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from kbp.kernels import RBF, Kronecker, Linear, Sphere, median_heuristic
from kbp.model import (EdgeTemplate, ParzenMarginal, embedding_error_bound_check, fit_edge_model,
                       fit_likelihood, parzen_density, pool_template_samples, split_pairs)


def random_pairs(seed, m=50, d=2):
    r = np.random.default_rng(seed)
    xs = r.normal(size=(m, d))
    return xs + 0.3 * r.normal(size=(m, d)), xs


class TestFitEdgeModel:
    def test_identical_pairs_rank_one(self):
        pairs = [((1.0, 2.0), (0.5,)), ((1.0, 2.0), (0.5,))]
        M = fit_edge_model(pairs, RBF(1.0), RBF(1.0), 1e-3, 1e-3, 2)
        assert M.basis_t.rank == M.basis_s.rank == M.basis_tensor.rank == 1
        assert M.W_ts.shape == (1, 1)
        assert M.G.shape == (1, 2) and M.G[0, 0] == pytest.approx(M.G[0, 1], rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_woodbury_matches_direct(self, seed):
        xt, xs = random_pairs(seed)
        k = RBF(median_heuristic(xs))
        M = fit_edge_model((xt, xs), k, k, 1e-3, 1e-3, 2)
        np.testing.assert_allclose(M.W_ts, M.direct_W_ts(), atol=1e-8)

    def test_rejects_bad_lambda_and_size(self):
        xt, xs = random_pairs(0, m=5)
        with pytest.raises(ValueError):
            fit_edge_model((xt, xs), RBF(1.0), RBF(1.0), 0.0)
        with pytest.raises(ValueError):
            fit_edge_model((xt[:1], xs[:1]), RBF(1.0), RBF(1.0), 1e-3)

    def test_deterministic(self):
        xt, xs = random_pairs(3)
        a = fit_edge_model((xt, xs), RBF(0.5), RBF(0.5), 1e-3, 1e-2, 3, True)
        b = fit_edge_model((xt, xs), RBF(0.5), RBF(0.5), 1e-3, 1e-2, 3, True)
        for f in ("W_ts", "K_tensor_cross", "tensor_points", "target_points", "G"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_modes(self):
        xt, xs = random_pairs(1, m=10)
        assert fit_edge_model((xt, xs), RBF(1.0), RBF(1.0)).modes == ("lowrank", "linear")
        M = fit_edge_model((xt, xs), RBF(1.0), RBF(1.0), keep_full_rank=True)
        assert "exact" in M.modes
        with pytest.raises(ValueError):
            fit_edge_model((xt, xs), RBF(1.0), RBF(1.0)).eval_points("exact")

    def test_kronecker_conditional_expectation(self):
        # exhaustive discrete pairs: the solve step must reproduce E[f(x_t) | x_s]
        r = np.random.default_rng(0)
        xs = r.integers(0, 3, 300).astype(float)
        xt = (xs + r.integers(0, 2, 300)) % 4
        f = r.normal(size=4)
        truth = np.array([f[xt[xs == v].astype(int)].mean() for v in range(3)])
        M = fit_edge_model((xt, xs), Kronecker(), Kronecker(), 1e-12, 1e-6, 1)
        p = f[M.eval_points("lowrank")[:, 0].astype(int)]
        alpha = M.solve(p, "lowrank")
        vals = Kronecker().gram(np.arange(3.0)[:, None], M.target_points) @ alpha
        np.testing.assert_allclose(vals, truth, atol=1e-9)


def test_split_pairs_forms():
    A, B = split_pairs([((1, 2), 3), ((4, 5), 6)])
    assert A.shape == (2, 2) and B.shape == (2, 1)
    with pytest.raises(ValueError):
        split_pairs((np.zeros(3), np.zeros(2)))


def test_edge_template_directions():
    t = EdgeTemplate("fwd", "bwd")
    assert t.model(False) == "fwd" and t.model(True) == "bwd"
    assert EdgeTemplate("sym").model(True) == "sym"


class TestPooling:
    def test_concatenates_in_order(self):
        pooled = pool_template_samples({"e1": [1, 2, 3], "e2": [4, 5, 6]}, {"e1": "A", "e2": "A"})
        assert pooled == {"A": [1, 2, 3, 4, 5, 6]}

    def test_missing_assignment(self):
        with pytest.raises(ValueError):
            pool_template_samples({"e1": [1]}, {})

    def test_empty_template(self):
        with pytest.raises(ValueError):
            pool_template_samples({"e1": []}, {"e1": "A"})


class TestErrorBound:
    def test_full_rank_zero_error(self):
        xt, xs = random_pairs(0, m=12)
        M = fit_edge_model((xt, xs), RBF(1.0), RBF(1.0), 1e-2, 1e-12, 2, True)
        hs, bound = embedding_error_bound_check(M, M)
        assert hs < 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_bound_holds_and_trend(self, seed):
        xt, xs = random_pairs(seed, m=30)
        k = RBF(median_heuristic(xs))
        hs = []
        for eps in (1e-1, 1e-2, 1e-3):
            M = fit_edge_model((xt, xs), k, k, 1e-2, eps, 2, True)
            h, b = embedding_error_bound_check(M, M)
            assert h <= b
            hs.append(h)
        assert hs[0] >= hs[1] >= hs[2]

    def test_rejects_unnormalized_kernel(self):
        xt, xs = random_pairs(0, m=10)
        M = fit_edge_model((xt, xs), Linear(), Linear(), 1e-2, 1e-3, 1, True)
        with pytest.raises(ValueError):
            embedding_error_bound_check(M, M)

    def test_rejects_mismatched_models(self):
        xt, xs = random_pairs(0, m=10)
        a = fit_edge_model((xt, xs), RBF(1.0), RBF(1.0), 1e-2, 1e-3, 1, True)
        b = fit_edge_model((xt, xs), RBF(1.0), RBF(1.0), 1e-3, 1e-3, 1)
        with pytest.raises(ValueError):
            embedding_error_bound_check(a, b)

    def test_hs_trace_matches_explicit_features(self):
        # linear kernel on 2-D points: features are the points themselves
        r = np.random.default_rng(4)
        xs = r.normal(size=(8, 2))
        xs /= 2 * np.linalg.norm(xs, axis=1, keepdims=True)
        xt = xs[:, ::-1].copy()
        from kbp.kernels import Linear as Lin

        class NormLinear(Lin):
            normalized = True

        k = NormLinear()
        M = fit_edge_model((xt, xs), k, k, 0.1, 0.3, 1, True)
        hs, _ = embedding_error_bound_check(M, M, check=False)
        c = 0.1 * 8
        U_full = xt.T @ np.linalg.solve(xs @ xs.T + c * np.eye(8), xs)
        U_low = M.tensor_points.T @ M.W_ts @ M.target_points
        assert hs == pytest.approx(np.linalg.norm(U_full - U_low), rel=1e-8, abs=1e-12)


class TestLikelihood:
    def test_rejects_single_pair(self):
        with pytest.raises(ValueError):
            fit_likelihood([((0.0,), (1.0,))], RBF(1.0), RBF(1.0))

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            fit_likelihood([(0.0, 1.0), (1.0, 2.0)], RBF(1.0), RBF(1.0), lam=-1.0)

    def test_identical_hidden_samples_fit(self):
        L = fit_likelihood([(0.0, 1.0)] * 4, RBF(1.0), RBF(1.0), 1e-4)
        assert np.all(np.isfinite(L.coefficients(np.array([[1.0]]))))

    def test_domain_mismatch(self):
        L = fit_likelihood([(0.0, 1.0), (1.0, 2.0)], RBF(1.0), RBF(1.0))
        with pytest.raises(ValueError):
            L.coefficients(np.array([[1.0, 2.0]]))


class TestParzen:
    def test_integrates_to_one(self):
        P = ParzenMarginal(np.array([[0.0], [1.5], [-2.0]]), RBF(0.7))
        total, _ = quad(lambda x: parzen_density(P, [x]), -30, 30, points=[-2, 0, 1.5])
        assert total == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("sigma", [0.3, 2.0])
    def test_peak_value(self, sigma):
        # Gaussian with variance 1/(2 sigma) peaks at sqrt(sigma / pi)
        P = ParzenMarginal(np.zeros((1, 1)), RBF(sigma))
        assert parzen_density(P, [0.0]) == pytest.approx(np.sqrt(sigma / np.pi), rel=1e-14)

    def test_two_dimensional_normalization(self):
        P = ParzenMarginal(np.zeros((1, 2)), RBF(0.5))
        h = 0.05
        g = np.arange(-8, 8, h)
        X = np.array(np.meshgrid(g, g)).reshape(2, -1).T
        assert P.density(X).sum() * h * h == pytest.approx(1.0, abs=1e-3)

    def test_symmetric_about_midpoint(self):
        P = ParzenMarginal(np.array([[-1.0], [1.0]]), RBF(1.0))
        x = np.linspace(0, 3, 7)[:, None]
        np.testing.assert_allclose(P.density(x), P.density(-x), rtol=1e-14)

    def test_non_rbf_rejected(self):
        with pytest.raises(ValueError):
            ParzenMarginal(np.zeros((2, 1)), Linear())
        with pytest.raises(ValueError):
            ParzenMarginal(np.array([[1.0, 0.0]]), Sphere(1.0))

    def test_kronecker_is_empirical_pmf(self):
        P = ParzenMarginal(np.array([[0.0], [0.0], [1.0], [2.0]]), Kronecker())
        np.testing.assert_allclose(P.density(np.array([[0.0], [1.0], [5.0]])), [0.5, 0.25, 0.0])


@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 20))
def test_parzen_nonnegative(seed, n):
    r = np.random.default_rng(seed)
    P = ParzenMarginal(r.normal(size=(n, 2)), RBF(float(r.uniform(0.1, 5))))
    assert np.all(P.density(r.normal(scale=4, size=(50, 2))) >= 0)


@given(seed=st.integers(0, 10 ** 6), m=st.integers(5, 40), lam=st.sampled_from([1e-4, 1e-2, 1.0]))
def test_woodbury_property(seed, m, lam):
    xt, xs = random_pairs(seed, m=m)
    k = RBF(1.0)
    M = fit_edge_model((xt, xs), k, k, lam, 1e-3, 2)
    np.testing.assert_allclose(M.W_ts, M.direct_W_ts(), atol=1e-8)
