import numpy as np
import pytest

from application.core.errors import ShapeMismatch
from application.models import EncoderConfig, TrainConfig
from application.services.autodiff import CompGraph, finite_difference_check, ops
from application.services.encoder import Encoder, embed, init_params, match_head, param_shapes
from application.services.encoder.encoder import A_RAW, B
from application.services.hib import batch_objective, draw_noise


@pytest.fixture
def images(rng):
    return rng.uniform(0.0, 1.0, size=(3, 28, 56))


@pytest.mark.parametrize(
    "representation, n_components, has_sigma",
    [("point", 1, False), ("gaussian", 1, True), ("mog", 3, True)],
)
def test_output_shapes(representation, n_components, has_sigma, images):
    config = EncoderConfig(n_digits=2, embed_dim=3, representation=representation,
                           n_components=n_components, conv_channels=(2, 3))
    out = Encoder(config, init_params(config, seed=0)).encode(images)
    assert out.mu.shape == (3, n_components, 3)
    assert (out.sigma is not None) == has_sigma
    if has_sigma:
        assert out.sigma.shape == out.mu.shape
        assert (out.sigma > 0).all()


def test_param_shapes(small_encoder):
    shapes = param_shapes(small_encoder)
    assert shapes["conv1.w"] == (5, 5, 1, 2)
    assert shapes["conv2.w"] == (5, 5, 2, 3)
    assert shapes["head.mu.0.w"] == (7 * 14 * 3, 2)
    assert shapes["match.a_raw"] == ()


def test_init_is_deterministic(small_encoder):
    a, b = init_params(small_encoder, seed=3), init_params(small_encoder, seed=3)
    assert all(np.array_equal(a[name], b[name]) for name in a)
    assert not np.array_equal(a["conv1.w"], init_params(small_encoder, seed=4)["conv1.w"])


def test_initial_match_head(small_encoder):
    head = match_head(init_params(small_encoder, seed=0))
    assert head.a == pytest.approx(1.0)
    assert head.b == 0.0


def test_encode_is_deterministic_and_chunk_invariant(small_encoder, images):
    encoder = Encoder(small_encoder, init_params(small_encoder, seed=1))
    whole = encoder.encode(images)
    chunked = encoder.encode(images, chunk_size=2)
    np.testing.assert_allclose(whole.mu, chunked.mu, rtol=1e-12)
    np.testing.assert_allclose(whole.sigma, chunked.sigma, rtol=1e-12)
    np.testing.assert_array_equal(whole.mu, encoder.encode(images).mu)


def test_sigma_at_zero_pre_activation(small_encoder, images):
    params = init_params(small_encoder, seed=0)
    params["head.sigma.0.w"][...] = 0.0
    out = Encoder(small_encoder, params).encode(images)
    np.testing.assert_allclose(out.sigma, np.log(2.0) + small_encoder.sigma_floor)


def test_single_component_mixture_is_gaussian(images):
    gaussian = EncoderConfig(n_digits=2, representation="gaussian", conv_channels=(2, 3))
    mixture = EncoderConfig(n_digits=2, representation="mog", n_components=1, conv_channels=(2, 3))
    assert mixture == gaussian and mixture.label == "MoG-1"
    assert param_shapes(gaussian) == param_shapes(mixture)
    a = Encoder(gaussian, init_params(gaussian, seed=2)).encode(images)
    b = Encoder(mixture, init_params(mixture, seed=2)).encode(images)
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.sigma, b.sigma)


def test_wrong_image_shape(small_encoder):
    encoder = Encoder(small_encoder, init_params(small_encoder, seed=0))
    with pytest.raises(ShapeMismatch):
        encoder.encode(np.zeros((2, 28, 28)))


def test_missing_parameters(small_encoder):
    params = init_params(small_encoder, seed=0)
    del params["conv2.b"]
    with pytest.raises(ShapeMismatch):
        Encoder(small_encoder, params)


def test_empty_batch(small_encoder):
    out = Encoder(small_encoder, init_params(small_encoder, seed=0)).encode(np.zeros((0, 28, 56)))
    assert out.mu.shape == (0, 1, 2)


def test_only_mixtures_take_several_components():
    with pytest.raises(ValueError):
        EncoderConfig(representation="gaussian", n_components=2)


def test_encoder_gradients(rng):
    config = EncoderConfig(n_digits=1, embed_dim=2, representation="gaussian", conv_channels=(2, 2))
    weights_mu, weights_sigma = rng.normal(size=(2, 1, 2)), rng.normal(size=(2, 1, 2))

    def program(g, leaves):
        nodes = embed(config, leaves, leaves["images"])
        loss = ops.sum(ops.mul(nodes.mu, weights_mu)) + ops.sum(ops.mul(nodes.sigma, weights_sigma))
        return {"loss": loss}

    graph = CompGraph(program, parameters=init_params(config, seed=0))
    inputs = {"images": rng.uniform(size=(2, 28, 28, 1))}
    for leaf in ("conv1.w", "conv2.b", "head.mu.0.w", "head.sigma.0.b"):
        report = finite_difference_check(graph, leaf, inputs=inputs, max_coords=12, tolerance=1e-4, rng=rng)
        assert report.passed, f"{leaf}: {report.max_relative_error:.2e}"


@pytest.mark.parametrize("representation, n_components", [("gaussian", 1), ("mog", 2)])
def test_training_objective_gradients(representation, n_components, rng):
    encoder = EncoderConfig(n_digits=1, embed_dim=2, representation=representation,
                            n_components=n_components, conv_channels=(2, 2))
    config = TrainConfig(encoder=encoder, batch_size=4, num_samples=4, kl_samples=4, beta=0.01)
    left, right, labels = np.array([0, 1, 2, 0]), np.array([1, 2, 3, 3]), np.array([1, 0, 1, 0])

    def program(g, leaves, noise):
        nodes = embed(encoder, leaves, leaves["images"])
        return batch_objective(config, nodes, leaves[A_RAW], leaves[B], left, right, labels, noise)

    # the conv stack sits upstream of every checked leaf, so relu and max-pool kinks never move
    for seed in range(10):
        graph = CompGraph(program, parameters=init_params(encoder, seed=seed))
        inputs = {"images": rng.uniform(size=(4, 28, 28, 1))}
        noise = draw_noise(rng, config, batch_size=4, n_pairs=4)
        for leaf in ("head.mu.0.w", "head.sigma.0.b", A_RAW, B):
            report = finite_difference_check(graph, leaf, inputs=inputs, max_coords=8, rng=rng, noise=noise)
            assert report.passed, f"{leaf}: {report.max_relative_error:.2e}"
