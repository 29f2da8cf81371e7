import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from kbp.baselines.discrete import (DiscreteMRF, brute_force_marginals, discrete_bp,
                                    load_discrete_mrf)
from kbp.baselines.lscde import (GaussianMixtureConditional, design_matrices,
                                 fit_conditional_density_ls, fit_single_gaussian, product_integral)
from kbp.baselines.particle import (ParticleSet, init_particles, node_rng, particle_bp)
from kbp.graph import FactorGraph, chain_graph, grid_graph, random_tree
from kbp.kernels import RBF
from kbp.model import ParzenMarginal


def random_mrf(rng, edges, n, max_card=4):
    cards = [int(c) for c in rng.integers(2, max_card + 1, size=n)]
    node = [rng.random(c) + 0.05 for c in cards]
    edge = {(a, b): rng.random((cards[a], cards[b])) + 0.05 for a, b in edges}
    return DiscreteMRF(cards, node, edge)


class TestDiscrete:
    def test_single_node(self):
        mrf = DiscreteMRF([3], [np.array([1.0, 2.0, 1.0])])
        np.testing.assert_allclose(discrete_bp(mrf)[0], [0.25, 0.5, 0.25])

    def test_two_node_symmetric(self):
        mrf = DiscreteMRF([2, 2], [np.ones(2), np.ones(2)], {(0, 1): [[2.0, 1.0], [1.0, 2.0]]})
        np.testing.assert_allclose(discrete_bp(mrf)[0], [0.5, 0.5])
        np.testing.assert_allclose(brute_force_marginals(mrf)[0], [0.5, 0.5])

    @pytest.mark.parametrize("seed", range(10))
    def test_tree_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        mrf = random_mrf(rng, random_tree(n, rng), n)
        for got, want in zip(discrete_bp(mrf), brute_force_marginals(mrf)):
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_independent_nodes(self):
        node = [np.array([1.0, 3.0]), np.array([2.0, 1.0, 1.0])]
        mrf = DiscreteMRF([2, 3], node, {(0, 1): np.ones((2, 3))})
        for got, p in zip(brute_force_marginals(mrf), node):
            np.testing.assert_allclose(got, p / p.sum(), atol=1e-14)

    def test_cycle_order_independent(self):
        rng = np.random.default_rng(7)
        mrf = random_mrf(rng, [(0, 1), (1, 2), (2, 0)], 3)
        a = brute_force_marginals(mrf)
        b = brute_force_marginals(mrf, order=[2, 0, 1])
        for x, y in zip(a, b):
            assert x.sum() == pytest.approx(1.0)
            np.testing.assert_allclose(x, y, atol=1e-14)

    def test_loopy_grid_beliefs_valid(self):
        rng = np.random.default_rng(3)
        g = grid_graph(3, 3)
        mrf = random_mrf(rng, [(a, b) for a, b, _ in g.edges], 9)
        for b in discrete_bp(mrf, 50, 1e-10):
            assert np.all(b >= 0) and b.sum() == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteMRF([2], [np.array([0.0, 0.0])])
        with pytest.raises(ValueError):
            DiscreteMRF([2, 2], [np.ones(2), np.ones(2)], {(0, 1): [[1.0, 0.0], [1.0, 0.0]]})
        with pytest.raises(ValueError):
            DiscreteMRF([2], [np.ones(3)])

    def test_zero_message_raises(self):
        # node 0 only allows state 0, whose edge row is zeroed after validation
        mrf = DiscreteMRF([2, 2], [np.array([1.0, 0.0]), np.ones(2)], {(0, 1): np.ones((2, 2))})
        mrf.edge_pot[(0, 1)][0, :] = 0.0
        with pytest.raises(FloatingPointError):
            discrete_bp(mrf)

    def test_state_space_limit(self):
        mrf = DiscreteMRF([10] * 8, [np.ones(10)] * 8)
        with pytest.raises(ValueError):
            brute_force_marginals(mrf)

    def test_csv_loading(self, tmp_path):
        (tmp_path / "n.csv").write_text("node,p0,p1\n0,1,1\n1,1,3\n")
        (tmp_path / "e.csv").write_text("s,t,cs,ct,v\n0,1,2,2,2,1,1,2\n")
        mrf = load_discrete_mrf(tmp_path / "n.csv", tmp_path / "e.csv")
        assert mrf.cards == [2, 2]
        np.testing.assert_allclose(mrf.table(1, 0), [[2.0, 1.0], [1.0, 2.0]])
        for a, b in zip(discrete_bp(mrf), brute_force_marginals(mrf)):
            np.testing.assert_allclose(a, b, atol=1e-12)


def two_component_data(m, rng):
    u = rng.uniform(-2, 2, size=m)
    upper = rng.random(m) < 0.5
    v = np.where(upper, u + 1.5, -u - 1.5) + 0.4 * rng.standard_normal(m)
    return u, v


def true_two_component(v, u):
    s = 0.4
    g = lambda mu: np.exp(-(v - mu) ** 2 / (2 * s * s)) / np.sqrt(2 * np.pi * s * s)
    return 0.5 * g(u + 1.5) + 0.5 * g(-u - 1.5)


class TestLSCDE:
    def test_identical_pairs_single_weight(self):
        gm = fit_conditional_density_ls([(0.5, 1.0)] * 10, 1, 0.3)
        assert gm.b == 1 and gm.alpha[0] > 0

    @pytest.mark.parametrize("seed", range(20))
    def test_weights_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(60, 2))
        v = np.sin(u[:, :1]) + 0.3 * rng.normal(size=(60, 1))
        gm = fit_conditional_density_ls((u, v), 20, (0.5, 0.3), 1e-3, seed)
        assert np.all(gm.alpha >= 0) and np.any(gm.alpha > 0)

    def test_product_integral_matches_1d_quadrature(self):
        r = np.array([[0.0], [0.7], [-1.2]])
        h = 0.45
        P = product_integral(r, h)
        g = lambda v, c: np.exp(-(v - c) ** 2 / (2 * h * h))
        for i in range(3):
            for k in range(3):
                want = quad(lambda v: g(v, r[i, 0]) * g(v, r[k, 0]), -np.inf, np.inf)[0]
                assert P[i, k] == pytest.approx(want, abs=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_H_matches_2d_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(5, 1))
        v = rng.normal(size=(5, 2))
        q, r = u[:3], v[:3]
        h_u, h_v = 0.8, 0.6
        H, h = design_matrices(u, v, q, r, h_u, h_v)
        phi = np.exp(-(u - q.T) ** 2 / (2 * h_u ** 2))          # (5, 3)
        for i in range(3):
            for k in range(3):
                def f(y, x):
                    z = np.array([x, y])
                    return (np.exp(-np.sum((z - r[i]) ** 2) / (2 * h_v ** 2))
                            * np.exp(-np.sum((z - r[k]) ** 2) / (2 * h_v ** 2)))
                integral = dblquad(f, -8, 8, -8, 8, epsabs=1e-12, epsrel=1e-12)[0]
                want = np.sum(phi[:, i] * phi[:, k]) * integral
                assert H[i, k] == pytest.approx(want, abs=1e-6)
        gv = np.exp(-((v[:, None, :] - r[None, :, :]) ** 2).sum(-1) / (2 * h_v ** 2))
        np.testing.assert_allclose(h, np.sum(phi * gv, axis=0), rtol=1e-12)

    def test_density_normalised_per_u(self):
        rng = np.random.default_rng(0)
        u, v = two_component_data(300, rng)
        gm = fit_conditional_density_ls((u, v), 50, 0.3, 1e-3, 0)
        for u0 in (-1.0, 0.0, 1.3):
            total = quad(lambda x: gm.density([[x]], [[u0]])[0, 0], -10, 10, limit=200)[0]
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_mixture_beats_single_gaussian(self):
        rng = np.random.default_rng(11)
        u, v = two_component_data(2000, rng)
        gm = fit_conditional_density_ls((u, v), 100, 0.3, 1e-3, 0)
        single = fit_single_gaussian((u, v))

        def l1(dens, u0):
            return quad(lambda x: abs(dens(x, u0) - true_two_component(x, u0)), -8, 8, limit=200)[0]

        for u0 in (-1.0, 0.5, 1.5):
            e_mix = l1(lambda x, a: gm.density([[x]], [[a]])[0, 0], u0)
            e_one = l1(lambda x, a: single([[x]], [[a]])[0, 0], u0)
            assert e_mix < e_one

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_conditional_density_ls([(0.0, 0.0)] * 3, 5, 0.3)
        with pytest.raises(ValueError):
            fit_conditional_density_ls([(0.0, 0.0)] * 3, 1, 0.3, lam=0.0)
        with pytest.raises(ValueError):
            GaussianMixtureConditional(np.zeros((1, 1)), np.zeros((1, 1)), 1.0, 1.0, np.array([-1.0]))

    @given(st.integers(0, 10 ** 6))
    def test_projection_property(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=30)
        v = rng.normal(size=30)
        gm = fit_conditional_density_ls((u, v), 10, 0.5, 1e-3, seed)
        assert np.all(gm.alpha >= 0)


def chain_setup(seed=0, n=4, b=20):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=400)
    xn = 0.8 * x + 0.3 * rng.normal(size=400)
    y = x + 0.2 * rng.normal(size=400)
    pair = fit_conditional_density_ls((x, xn), 40, 0.3, 1e-3, 0)
    lik = fit_conditional_density_ls((x, y), 40, 0.3, 1e-3, 1)
    g = chain_graph(n, observations=np.linspace(-1, 1, n))
    marg = ParzenMarginal(x, RBF(2.0))
    parts = init_particles(g, x, b, seed, marg)
    return g, {"pair": pair, "obs": lik}, parts, marg


class TestParticle:
    def test_seed_deterministic(self):
        g, conds, parts, marg = chain_setup()
        a = particle_bp(g, conds, parts, 6, 3, seed=5, marginal=marg)
        b = particle_bp(g, conds, parts, 6, 3, seed=5, marginal=marg)
        for x, y in zip(a.beliefs, b.beliefs):
            assert np.array_equal(x.points, y.points)
            assert np.array_equal(x.weights, y.weights)
            assert np.array_equal(x.target, y.target)

    def test_different_seed_moves_particles_differently(self):
        g, conds, parts, marg = chain_setup()
        a = particle_bp(g, conds, parts, 6, 3, seed=5, marginal=marg)
        b = particle_bp(g, conds, parts, 6, 3, seed=6, marginal=marg)
        assert any(not np.array_equal(x.points, y.points) for x, y in zip(a.beliefs, b.beliefs))

    def test_single_particle(self):
        g, conds, _, marg = chain_setup()
        parts = init_particles(g, np.array([0.3, -0.2]), 1, 0)
        res = particle_bp(g, conds, parts, 4, 10)
        for bl in res.beliefs:
            assert bl.weights.tolist() == [1.0]
            assert bl.points.shape == (1, 1)

    def test_beliefs_normalised_and_trace(self, tmp_path):
        g, conds, parts, marg = chain_setup()
        res = particle_bp(g, conds, parts, 4, 2, marginal=marg, keep_trace=True)
        for bl in res.beliefs:
            assert bl.weights.sum() == pytest.approx(1.0) and np.all(bl.weights >= 0)
        res.dump(tmp_path / "t.json")
        assert len(res.trace) == 4 * g.n_nodes

    def test_node_rng_independent_streams(self):
        a = node_rng(1, 2, 3).random(4)
        assert np.array_equal(a, node_rng(1, 2, 3).random(4))
        assert not np.array_equal(a, node_rng(1, 3, 3).random(4))

    def test_validation(self):
        with pytest.raises(ValueError):
            ParticleSet({0: np.zeros((0, 1))})
        with pytest.raises(ValueError):
            init_particles(chain_graph(2), np.zeros(3), 0)
        g, conds, parts, _ = chain_setup()
        with pytest.raises(KeyError):
            particle_bp(g, {"obs": conds["obs"]}, parts, 2)

    def test_ranking_matches_discrete_bp(self):
        # x in {0, 1, 2}; joint table J over (x_0, x_1); evidence y at node 0
        J = np.array([[0.25, 0.05, 0.02], [0.05, 0.20, 0.08], [0.03, 0.07, 0.25]])
        E = np.array([[0.1, 0.9], [0.6, 0.4], [0.8, 0.2]])       # P(y | x)
        counts = np.round(J * 3000).astype(int)
        a = np.repeat(np.repeat([0.0, 1.0, 2.0], 3), counts.ravel())
        b = np.repeat(np.tile([0.0, 1.0, 2.0], 3), counts.ravel())
        ecount = np.round(E * 1000).astype(int)
        hx = np.repeat(np.repeat([0.0, 1.0, 2.0], 2), ecount.ravel())
        hy = np.repeat(np.tile([0.0, 1.0], 3), ecount.ravel())
        h = 0.1
        fwd = fit_conditional_density_ls((b, a), 200, h, 1e-6, 0)    # p(x_0 | x_1)
        bwd = fit_conditional_density_ls((a, b), 200, h, 1e-6, 1)    # p(x_1 | x_0)
        lik = fit_conditional_density_ls((hx, hy), 100, h, 1e-6, 2)
        g = FactorGraph(2, [(0, 1, "pair")], {0: (np.array([0.0]), "obs")})
        samples = {0: a, 1: b}
        marg = {0: ParzenMarginal(a, RBF(0.5 / h ** 2)), 1: ParzenMarginal(b, RBF(0.5 / h ** 2))}
        parts = init_particles(g, samples, 60, 0)
        parts = ParticleSet(parts.points, {v: marg[v].density(parts.points[v]) for v in (0, 1)})

        res = particle_bp(g, {"pair": (fwd, bwd), "obs": lik}, parts, 2, 10)
        P0, P1 = J.sum(1), J.sum(0)
        mrf = DiscreteMRF([3, 3], [P0 * E[:, 0], P1], {(0, 1): J / np.outer(P0, P1)})
        want = discrete_bp(mrf)[1]
        bl = res.beliefs[1]
        # importance weights already divide out the sampling density
        got = np.array([bl.weights[np.isclose(bl.points[:, 0], v)].sum() for v in (0.0, 1.0, 2.0)])
        assert np.argsort(got).tolist() == np.argsort(want).tolist()
