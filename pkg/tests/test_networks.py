"""Testes das redes de brinquedo."""

import numpy as np
import pytest

from config import TrainConfig
from gradcheck import finite_diff_check, suite_passed
from networks import (
    NetworkError,
    build_networks,
    discriminator_forward,
    generator_channels,
    generator_forward,
    init_discriminator,
    init_generator,
)
from tensor import zero_grads


class TestGenerator:

    def test_output_shape_and_range(self, gen, rng):
        imagens, features = generator_forward(gen, rng.standard_normal((4, 8)))
        assert imagens.shape == (4, 1, 16, 16)
        assert np.all(np.abs(imagens.data) <= 1.0)
        assert features.shape == (4, 8, 16, 16)

    def test_deterministic(self, gen, rng):
        z = rng.standard_normal((2, 8))
        np.testing.assert_array_equal(generator_forward(gen, z)[0].data, generator_forward(gen, z)[0].data)

    def test_different_latents_differ(self, gen):
        a = generator_forward(gen, np.random.default_rng(1).standard_normal((1, 8)))[0].data
        b = generator_forward(gen, np.random.default_rng(2).standard_normal((1, 8)))[0].data
        assert np.linalg.norm(a - b) > 0

    def test_wrong_latent_dim(self, gen):
        with pytest.raises(NetworkError, match="wrong latent dim"):
            generator_forward(gen, np.zeros((2, 5)))

    def test_channels_for_32(self):
        assert generator_channels(3) == [32, 16, 8, 8]
        assert init_generator(8, 32, np.random.default_rng(0)).n_stages == 3

    def test_same_seed_same_parameters(self):
        a = init_generator(8, 16, np.random.default_rng(5))
        b = init_generator(8, 16, np.random.default_rng(5))
        for nome in a.params:
            np.testing.assert_array_equal(a.params[nome].data, b.params[nome].data)

    def test_gradients_match_finite_differences(self, gen, rng):
        z = rng.standard_normal((2, 8))
        relatorios = finite_diff_check(lambda: generator_forward(gen, z)[0].sum(), gen.params, samples=8, rng=rng)
        assert suite_passed(relatorios)


class TestDiscriminator:

    def test_probabilities_clamped(self, disc, rng):
        saida = discriminator_forward(disc, 50.0 * rng.standard_normal((3, 1, 16, 16)))
        assert saida.probs.shape == (3,)
        assert np.all(saida.probs.data >= 1e-7)
        assert np.all(saida.probs.data <= 1.0 - 1e-7)

    def test_tapped_layer_shapes(self, disc, rng):
        saida = discriminator_forward(disc, rng.standard_normal((2, 1, 16, 16)))
        assert saida.features.layer_ids == [1, 2]
        assert saida.features.layer(1).shape == (2, 8, 8, 8)
        assert saida.features.layer(2).shape == (2, 16, 4, 4)
        assert saida.embedding.shape == (2, 256)

    def test_custom_taps(self, rng):
        disc = init_discriminator(16, rng, tap_layers=(1,))
        assert discriminator_forward(disc, np.zeros((1, 1, 16, 16))).features.layer_ids == [1]

    def test_invalid_taps(self, rng):
        with pytest.raises(NetworkError, match="tap_layers"):
            init_discriminator(16, rng, tap_layers=(3,))

    def test_wrong_image_shape(self, disc):
        with pytest.raises(NetworkError, match="forma"):
            discriminator_forward(disc, np.zeros((1, 1, 8, 8)))

    def test_source_tag_carried(self, disc):
        saida = discriminator_forward(disc, np.zeros((1, 1, 16, 16)), source="generated")
        assert saida.features.source == "generated"

    def test_gradients_match_finite_differences(self, disc, rng):
        imagens = rng.standard_normal((2, 1, 16, 16))
        relatorios = finite_diff_check(lambda: discriminator_forward(disc, imagens).probs.sum(),
                                       disc.params, samples=8, rng=rng)
        assert suite_passed(relatorios)


def test_combined_objective_reaches_every_parameter():
    config = TrainConfig(latent_dim=8, image_size=16)
    gen, disc = build_networks(config, np.random.default_rng(9))
    z = np.random.default_rng(10).standard_normal((3, 8))
    imagens, _ = generator_forward(gen, z)
    saida = discriminator_forward(disc, imagens)
    zero_grads(list(gen.params.values()) + list(disc.params.values()))
    saida.probs.log().mean().backward()
    for nome, p in {**gen.params, **disc.params}.items():
        assert p.grad is not None and np.any(p.grad != 0), nome
