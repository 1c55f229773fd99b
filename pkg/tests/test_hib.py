import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from application.core.errors import DimMismatch, NonPositiveSigma, StratificationError
from application.models import EmbeddingBatch, EmbeddingDistribution, MatchHead
from application.services.autodiff import CompGraph, finite_difference_check
from application.services.hib import (
    cross_match_prob,
    draw_samples,
    hard_contrastive_loss,
    kl_batch,
    kl_nodes,
    kl_to_unit_gaussian,
    log_det_sigma,
    match_prob_mc,
    match_prob_point,
    pair_match_prob,
    sample,
    self_mismatch,
    self_mismatch_batch,
    soft_contrastive_loss,
    stratified_components,
    vib_emb_graph,
    vib_emb_loss,
)

FLOOR = 1e-9
UNIT = MatchHead()


# ============= Match probability =============
class TestMatchProbPoint:
    def test_identical_points(self):
        assert match_prob_point([1.0, 2.0], [1.0, 2.0], UNIT) == 0.5

    def test_offset_cancels(self):
        head = MatchHead.from_scale(2.0, b=1.0)
        assert match_prob_point([0.0, 0.0], [0.3, 0.4], head) == pytest.approx(0.5)

    def test_log_three(self):
        assert match_prob_point([0.0], [np.log(3.0)], UNIT) == pytest.approx(0.25, abs=1e-12)

    def test_decreasing_in_distance(self):
        probs = [match_prob_point([0.0], [d], UNIT) for d in (0.0, 0.5, 1.0, 4.0)]
        assert all(a > b for a, b in zip(probs, probs[1:]))

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            match_prob_point([0.0, 1.0], [0.0], UNIT)


class TestLosses:
    @pytest.mark.parametrize(
        "p, label, expected",
        [(0.5, 1, np.log(2.0)), (0.25, 0, -np.log(0.75)), (1.0, 1, 0.0)],
    )
    def test_soft(self, p, label, expected):
        assert soft_contrastive_loss(p, label) == pytest.approx(expected, abs=1e-11)

    def test_soft_is_finite_at_saturation(self):
        assert np.isfinite(soft_contrastive_loss(0.0, 1))
        assert np.isfinite(soft_contrastive_loss(1.0, 0))

    def test_soft_vectorized(self):
        out = soft_contrastive_loss(np.array([0.5, 0.25]), np.array([1, 0]))
        np.testing.assert_allclose(out, [np.log(2.0), -np.log(0.75)])

    @pytest.mark.parametrize(
        "z2, label, expected",
        [([0.0, 0.0], 1, 0.0), ([3.0, 4.0], 0, 0.0), ([0.4, 0.0], 0, 0.36), ([3.0, 4.0], 1, 25.0)],
    )
    def test_hard(self, z2, label, expected):
        assert hard_contrastive_loss([0.0, 0.0], z2, label, margin=1.0) == pytest.approx(expected)

    def test_hard_margin(self):
        with pytest.raises(ValueError):
            hard_contrastive_loss([0.0], [1.0], 0, margin=0.0)


# ============= Sampling =============
class TestSampling:
    def test_stratified_counts(self):
        assert np.bincount(stratified_components(2, 8)).tolist() == [4, 4]
        with pytest.raises(StratificationError):
            stratified_components(3, 8)

    def test_mixture_draws_split_evenly(self, rng):
        dist = EmbeddingDistribution.mixture([[0.0, 0.0], [5.0, 5.0]], [[0.1, 0.1], [0.1, 0.1]])
        draws = sample(dist, 8, rng)
        assert np.bincount(draws.source_component).tolist() == [4, 4]
        np.testing.assert_allclose(draws.samples[draws.source_component == 1].mean(axis=0), [5.0, 5.0], atol=0.5)

    def test_floor_sigma_collapses_to_mean(self, rng):
        dist = EmbeddingDistribution.gaussian([0.3, -1.2], [FLOOR, FLOOR])
        np.testing.assert_allclose(sample(dist, 16, rng).samples, np.tile([0.3, -1.2], (16, 1)), atol=1e-5)

    def test_sample_mean(self, rng):
        mu, sigma = np.array([1.0, -2.0]), np.array([0.5, 2.0])
        draws = sample(EmbeddingDistribution.gaussian(mu, sigma), 100_000, rng).samples
        assert (np.abs(draws.mean(axis=0) - mu) < 4 * sigma / np.sqrt(100_000)).all()

    def test_point_draws_are_copies(self, rng):
        draws = sample(EmbeddingDistribution.point([1.0, 2.0]), 3, rng).samples
        np.testing.assert_array_equal(draws, [[1.0, 2.0]] * 3)

    def test_non_positive_sigma(self):
        with pytest.raises(NonPositiveSigma):
            EmbeddingDistribution.gaussian([0.0], [0.0])


class TestMatchProbMC:
    def test_points_match_closed_form(self, rng):
        a, b = EmbeddingDistribution.point([0.0, 1.0]), EmbeddingDistribution.point([1.0, 1.0])
        assert match_prob_mc(a, b, UNIT, 8, rng) == match_prob_point([0.0, 1.0], [1.0, 1.0], UNIT)

    def test_floor_sigma_matches_point(self, rng):
        a = EmbeddingDistribution.gaussian([0.0, 0.0], [FLOOR, FLOOR])
        b = EmbeddingDistribution.gaussian([0.6, 0.8], [FLOOR, FLOOR])
        assert match_prob_mc(a, b, UNIT, 8, rng) == pytest.approx(match_prob_point([0, 0], [0.6, 0.8], UNIT), abs=1e-5)

    def test_shared_seed_is_exactly_symmetric(self):
        a = EmbeddingDistribution.gaussian([0.0, 0.5], [0.3, 1.1])
        b = EmbeddingDistribution.mixture([[1.0, 0.0], [-1.0, 2.0]], [[0.2, 0.4], [0.9, 0.1]])
        head = MatchHead.from_scale(1.7, b=0.4)
        for seed in range(5):
            assert match_prob_mc(a, b, head, 8, shared_seed=seed) == match_prob_mc(b, a, head, 8, shared_seed=seed)

    def test_large_k_against_brute_force(self, rng):
        a = EmbeddingDistribution.gaussian([0.0, 0.0], [0.3, 0.5])
        b = EmbeddingDistribution.gaussian([0.5, 0.2], [0.4, 0.2])
        estimate = match_prob_mc(a, b, UNIT, 512, rng)
        z1 = rng.normal(a.mu[0], a.sigma[0], size=(1_000_000, 2))
        z2 = rng.normal(b.mu[0], b.sigma[0], size=(1_000_000, 2))
        brute = expit(-np.linalg.norm(z1 - z2, axis=1))
        assert estimate == pytest.approx(brute.mean(), abs=0.01)

    def test_variance_shrinks_with_k(self):
        a = EmbeddingDistribution.gaussian([0.0, 0.0], [1.0, 1.0])
        b = EmbeddingDistribution.gaussian([1.0, 0.0], [1.0, 1.0])

        def spread(k):
            return np.var([match_prob_mc(a, b, UNIT, k, np.random.default_rng(seed)) for seed in range(100)])

        assert 8 * spread(128) <= spread(8)

    def test_requires_randomness(self):
        dist = EmbeddingDistribution.gaussian([0.0], [1.0])
        with pytest.raises(ValueError):
            match_prob_mc(dist, dist, UNIT, 4)

    def test_stratification_error_propagates(self, rng):
        dist = EmbeddingDistribution.mixture([[0.0], [1.0], [2.0]], [[1.0], [1.0], [1.0]])
        with pytest.raises(StratificationError):
            match_prob_mc(dist, dist, UNIT, 8, rng)


# ============= KL =============
def _kl_by_quadrature(mu, sigma) -> float:
    """Per-axis numerical KL(N(mu, diag sigma^2) || N(0, I)); diagonal covariances factor over axes."""
    total = 0.0
    for m, s in zip(mu, sigma):
        p, r = stats.norm(m, s), stats.norm(0.0, 1.0)
        value, _ = integrate.quad(
            lambda z: p.pdf(z) * (p.logpdf(z) - r.logpdf(z)), m - 12 * s, m + 12 * s, epsabs=1e-12, epsrel=1e-10,
        )
        total += value
    return total


def _random_gaussians(n, seed=21):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        dim = int(rng.integers(1, 5))
        yield rng.normal(0.0, 1.5, size=dim), rng.uniform(0.1, 3.0, size=dim)


class TestKL:
    def test_unit_gaussian(self):
        assert kl_to_unit_gaussian(EmbeddingDistribution.gaussian([0.0, 0.0], [1.0, 1.0])) == 0.0

    @pytest.mark.parametrize("mu, sigma", list(_random_gaussians(20)))
    def test_closed_form_against_quadrature(self, mu, sigma):
        kl = kl_to_unit_gaussian(EmbeddingDistribution.gaussian(mu, sigma))
        assert kl == pytest.approx(_kl_by_quadrature(mu, sigma), abs=1e-6)
        assert kl >= 0

    def test_one_dimension_example(self):
        assert kl_to_unit_gaussian(EmbeddingDistribution.gaussian([1.0], [1.0])) == pytest.approx(0.5)

    def test_collapsed_mixture_matches_gaussian(self, rng):
        mu, sigma = [0.5, -0.2], [0.8, 1.2]
        collapsed = EmbeddingDistribution.mixture([mu, mu], [sigma, sigma])
        closed = kl_to_unit_gaussian(EmbeddingDistribution.gaussian(mu, sigma))
        assert kl_to_unit_gaussian(collapsed, rng, k_kl=8192) == pytest.approx(closed, abs=0.05)

    def test_point_has_no_kl(self):
        with pytest.raises(ValueError):
            kl_to_unit_gaussian(EmbeddingDistribution.point([0.0]))

    def test_batch_matches_single(self, rng):
        batch = EmbeddingBatch(kind="gaussian", mu=rng.normal(size=(4, 1, 2)), sigma=rng.uniform(0.5, 2, size=(4, 1, 2)))
        expected = [kl_to_unit_gaussian(batch[i]) for i in range(4)]
        np.testing.assert_allclose(kl_batch(batch), expected)


# ============= VIB objective =============
class TestVibEmbLoss:
    def test_zero_beta_is_contrastive(self):
        a = EmbeddingDistribution.gaussian([0.0, 0.0], [0.5, 0.5])
        b = EmbeddingDistribution.gaussian([1.0, 0.0], [0.5, 0.5])
        loss = vib_emb_loss(a, b, 1, UNIT, 0.0, 8, np.random.default_rng(3))
        p = match_prob_mc(a, b, UNIT, 8, np.random.default_rng(3))
        assert loss == pytest.approx(soft_contrastive_loss(p, 1))

    def test_unit_gaussians_add_no_kl(self):
        unit = EmbeddingDistribution.gaussian([0.0, 0.0], [1.0, 1.0])
        with_kl = vib_emb_loss(unit, unit, 0, UNIT, 1.0, 8, np.random.default_rng(4))
        without = vib_emb_loss(unit, unit, 0, UNIT, 0.0, 8, np.random.default_rng(4))
        assert with_kl == without

    def test_negative_beta(self, rng):
        unit = EmbeddingDistribution.gaussian([0.0], [1.0])
        with pytest.raises(ValueError):
            vib_emb_loss(unit, unit, 0, UNIT, -1.0, 8, rng)

    @pytest.mark.parametrize(
        "d1, d2, label, beta",
        [
            (EmbeddingDistribution.gaussian([0.1, -0.4], [0.6, 0.9]),
             EmbeddingDistribution.gaussian([0.7, 0.2], [1.3, 0.4]), 1, 0.1),
            (EmbeddingDistribution.mixture([[0.1, -0.4], [1.0, 1.0]], [[0.6, 0.9], [0.3, 0.5]]),
             EmbeddingDistribution.mixture([[0.7, 0.2], [-1.0, 0.0]], [[1.3, 0.4], [0.8, 0.8]]), 0, 0.1),
            (EmbeddingDistribution.point([0.1, -0.4]), EmbeddingDistribution.point([0.7, 0.2]), 0, 0.0),
        ],
        ids=["gaussian", "mixture", "point"],
    )
    def test_gradients(self, d1, d2, label, beta, rng):
        head = MatchHead.from_scale(1.3, b=0.2)
        graph, context = vib_emb_graph(d1, d2, label, head, beta, k=4, rng=rng, k_kl=4)
        for leaf in graph.parameters:
            report = finite_difference_check(graph, leaf, tolerance=1e-4, **context)
            assert report.passed, f"{leaf}: {report.max_relative_error:.2e}"

    def test_graph_agrees_with_numpy(self, rng):
        d1 = EmbeddingDistribution.gaussian([0.1, -0.4], [0.6, 0.9])
        d2 = EmbeddingDistribution.gaussian([0.7, 0.2], [1.3, 0.4])
        graph, context = vib_emb_graph(d1, d2, 1, UNIT, 0.0, k=6, rng=rng)
        out = graph.forward(**context)
        eps = context["eps"]
        s1 = d1.mu + d1.sigma * eps[0]
        s2 = d2.mu + d2.sigma * eps[1]
        p = pair_match_prob(s1[None], s2[None], UNIT)[0]
        assert float(out["p"]) == pytest.approx(p, rel=1e-12)
        assert float(out["loss"]) == pytest.approx(soft_contrastive_loss(p, 1), rel=1e-12)


def test_mixture_kl_graph_agrees_with_numpy():
    rng = np.random.default_rng(6)
    batch = EmbeddingBatch(kind="mog", mu=rng.normal(size=(3, 2, 2)), sigma=rng.uniform(0.4, 1.5, size=(3, 2, 2)))
    eps_kl = np.random.default_rng(9).standard_normal((3, 8, 2))

    def program(g, leaves):
        kl = kl_nodes(leaves["mu"], leaves["sigma"], eps_kl)
        return {"kl": kl}

    graph = CompGraph(program, parameters={"mu": batch.mu, "sigma": batch.sigma})
    out = graph.forward()
    np.testing.assert_allclose(out["kl"], kl_batch(batch, np.random.default_rng(9), k_kl=8), rtol=1e-10, atol=1e-12)


# ============= Self-mismatch =============
class TestSelfMismatch:
    def test_point_is_one_minus_sigmoid_b(self, rng):
        point = EmbeddingDistribution.point([3.0, 1.0])
        assert self_mismatch(point, UNIT, 8, rng) == 0.5
        head = MatchHead.from_scale(2.0, b=1.5)
        assert self_mismatch(point, head, 8, rng) == pytest.approx(1.0 - expit(1.5))

    def test_wider_is_more_uncertain(self):
        wide = EmbeddingDistribution.gaussian([0.0, 0.0], [2.0, 2.0])
        narrow = EmbeddingDistribution.gaussian([0.0, 0.0], [0.5, 0.5])

        def estimates(dist):
            return np.array([self_mismatch(dist, UNIT, 512, np.random.default_rng(seed)) for seed in range(30)])

        wide_eta, narrow_eta = estimates(wide), estimates(narrow)
        # one estimate's Monte Carlo standard error, from the spread across seeds
        se = np.hypot(wide_eta.std(ddof=1), narrow_eta.std(ddof=1))
        assert wide_eta[0] - narrow_eta[0] > 3 * se

    def test_range(self, rng):
        for sigma in (FLOOR, 0.1, 1.0, 100.0):
            eta = self_mismatch(EmbeddingDistribution.gaussian([0.0], [sigma]), UNIT, 8, rng)
            assert 0.0 <= eta <= 1.0

    def test_batch(self, rng):
        points = EmbeddingBatch(kind="point", mu=np.zeros((3, 1, 2)))
        np.testing.assert_allclose(self_mismatch_batch(points, UNIT, 8, rng), 0.5)
        gaussians = EmbeddingBatch(kind="gaussian", mu=np.zeros((2, 1, 2)), sigma=np.array([[[0.01, 0.01]], [[3.0, 3.0]]]))
        eta = self_mismatch_batch(gaussians, UNIT, 64, rng)
        assert eta[1] > eta[0]


def test_cross_match_prob_matches_pairwise(rng):
    batch = EmbeddingBatch(kind="gaussian", mu=rng.normal(size=(5, 1, 3)), sigma=rng.uniform(0.2, 1.0, size=(5, 1, 3)))
    samples = draw_samples(batch, 4, rng)
    cross = cross_match_prob(samples[:2], samples, UNIT, chunk_size=1)
    for i in range(2):
        expected = pair_match_prob(np.repeat(samples[i:i + 1], 5, axis=0), samples, UNIT)
        np.testing.assert_allclose(cross[i], expected, rtol=1e-7)


def test_log_det_sigma():
    batch = EmbeddingBatch(kind="gaussian", mu=np.zeros((2, 1, 2)), sigma=np.array([[[1.0, 1.0]], [[np.e, 1.0]]]))
    np.testing.assert_allclose(log_det_sigma(batch), [0.0, 2.0])
