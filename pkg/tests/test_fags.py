"""Testes do aumento de features na superfície geodésica."""

import numpy as np
import pytest

from fags import (
    AugmentationError,
    FeatureStack,
    PseudoSourceBatch,
    TargetFeatureBatch,
    anchor_latent,
    augment_directory,
    geodesic_scc_loss,
    preshape_feature_loss,
    pseudo_source_features,
    sample_dirichlet,
    sample_source_weights,
    self_correlation,
    target_features,
)
from networks import discriminator_forward, generator_forward
from preshape import GeodesicSpec, WeightVector, geodesic_curve_point, geodesic_distance, project_preshape
from tensor import Tensor, zero_grads
from tensor_io import read_tensor, write_tensor


class TestDirichlet:

    def test_simplex(self, rng):
        omega = sample_dirichlet(5, 1.0, rng)
        assert np.all(omega.weights >= 0)
        assert omega.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_for_seed(self):
        a = sample_dirichlet(4, 1.0, np.random.default_rng(3)).weights
        b = sample_dirichlet(4, 1.0, np.random.default_rng(3)).weights
        np.testing.assert_array_equal(a, b)

    def test_single_entry(self, rng):
        np.testing.assert_array_equal(sample_dirichlet(1, 1.0, rng).weights, [1.0])

    def test_component_means(self):
        gerador = np.random.default_rng(0)
        amostras = np.array([sample_dirichlet(4, 1.0, gerador).weights for _ in range(20000)])
        np.testing.assert_allclose(amostras.mean(axis=0), 0.25, atol=0.01)

    def test_invalid_alpha(self, rng):
        with pytest.raises(AugmentationError, match="alpha"):
            sample_dirichlet(3, 0.0, rng)

    def test_direct_source_is_one_hot(self, rng):
        omega = sample_source_weights(4, 1.0, "direct", rng)
        assert sorted(omega.weights) == [0.0, 0.0, 0.0, 1.0]


class TestAnchorLatent:

    def test_weighted_sum(self):
        z = np.array([[0.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(anchor_latent(z, np.array([0.25, 0.75])), [0.75, 0.75])

    def test_convex_bounds(self, rng):
        z = rng.standard_normal((5, 7))
        ancora = anchor_latent(z, sample_dirichlet(5, 1.0, rng))
        assert np.all(ancora >= z.min(axis=0) - 1e-12)
        assert np.all(ancora <= z.max(axis=0) + 1e-12)

    def test_count_mismatch(self, rng):
        with pytest.raises(AugmentationError, match="difere de 3 pesos"):
            anchor_latent(rng.standard_normal((2, 4)), np.ones(3))


def _stack(rng, n=3):
    return FeatureStack([(1, rng.standard_normal((n, 4, 4, 4))), (2, rng.standard_normal((n, 8, 2, 2)))])


class TestPseudoSource:

    def test_two_equal_weights_midpoint(self, rng):
        real = _stack(rng, n=2)
        pseudo = pseudo_source_features(real, WeightVector(np.array([0.5, 0.5])))
        for (layer_id, mapa), (_, lote) in zip(pseudo.layers, real.layers):
            tau_1, tau_2 = project_preshape(lote[0]), project_preshape(lote[1])
            meio = geodesic_curve_point(GeodesicSpec(tau_1, tau_2, s=geodesic_distance(tau_1, tau_2) / 2))
            np.testing.assert_allclose(mapa.reshape(2, -1), meio.points, atol=1e-9)
            assert mapa.shape == lote.shape[1:]

    def test_one_hot_returns_projected_sample(self, rng):
        real = _stack(rng)
        pseudo = pseudo_source_features(real, WeightVector.one_hot(3, 1))
        for (_, mapa), (_, lote) in zip(pseudo.layers, real.layers):
            np.testing.assert_allclose(mapa.reshape(2, -1), project_preshape(lote[1]).points, atol=1e-9)

    def test_degenerate_layer_named(self, rng):
        real = FeatureStack([(3, np.concatenate([np.ones((1, 2, 2, 2)), rng.standard_normal((1, 2, 2, 2))]))])
        with pytest.raises(AugmentationError, match="camada 3"):
            pseudo_source_features(real, WeightVector(np.array([0.5, 0.5])))

    def test_weight_count_mismatch(self, rng):
        with pytest.raises(AugmentationError, match="3 pilhas de features para 2 pesos"):
            pseudo_source_features(_stack(rng), WeightVector(np.ones(2)))

    def test_layer_ids_increasing(self):
        with pytest.raises(AugmentationError, match="crescentes"):
            FeatureStack([(2, np.ones(2)), (1, np.ones(2))])


class TestSelfCorrelation:

    def test_orthogonal_positions(self):
        mapa = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        matriz = self_correlation(mapa).values.data
        np.testing.assert_allclose(matriz, np.eye(2), atol=1e-15)

    def test_properties(self, rng):
        matriz = self_correlation(rng.standard_normal((5, 3, 3))).values.data
        np.testing.assert_allclose(matriz, matriz.T, atol=1e-9)
        np.testing.assert_allclose(np.diag(matriz), 1.0, atol=1e-9)
        assert np.all(np.abs(matriz) <= 1.0 + 1e-9)

    def test_positive_scaling_per_position(self, rng):
        mapa = rng.standard_normal((4, 2, 3))
        escalas = rng.uniform(0.1, 10.0, (1, 2, 3))
        np.testing.assert_allclose(self_correlation(mapa * escalas).values.data,
                                   self_correlation(mapa).values.data, atol=1e-9)

    def test_zero_position_is_flagged(self, caplog):
        mapa = np.zeros((2, 1, 2))
        mapa[:, 0, 0] = [1.0, 2.0]
        resultado = self_correlation(mapa)
        assert resultado.degenerate
        assert resultado.values.data[0, 1] == 0.0
        assert "degenerada" in caplog.text


class TestLossG:

    def test_identical_inputs_zero(self, rng):
        camadas = [(1, rng.standard_normal((4, 2, 2)))]
        assert geodesic_scc_loss(TargetFeatureBatch(camadas), TargetFeatureBatch(camadas)).item() == 0.0

    def test_symmetric(self, rng):
        a = PseudoSourceBatch([(1, rng.standard_normal((4, 3, 3)))], WeightVector(np.ones(1)))
        b = PseudoSourceBatch([(1, rng.standard_normal((4, 3, 3)))], WeightVector(np.ones(1)))
        assert geodesic_scc_loss(a, b).item() == pytest.approx(geodesic_scc_loss(b, a).item(), abs=1e-12)

    def test_matches_double_loop(self, rng):
        a, b = rng.standard_normal((3, 2, 2)), rng.standard_normal((3, 2, 2))

        def correlacao(mapa):
            vetores = mapa.reshape(3, 4).T
            return np.array([[u @ v / (np.linalg.norm(u) * np.linalg.norm(v)) for v in vetores] for u in vetores])

        soma = 0.0
        for x in (correlacao(b) - correlacao(a)).reshape(-1):
            soma += 0.5 * x * x if abs(x) < 1.0 else abs(x) - 0.5
        valor = geodesic_scc_loss(TargetFeatureBatch([(1, a)]), TargetFeatureBatch([(1, b)])).item()
        assert valor == pytest.approx(soma / 16.0, abs=1e-12)

    def test_layer_mismatch(self, rng):
        a = TargetFeatureBatch([(1, rng.standard_normal((2, 2, 2)))])
        b = TargetFeatureBatch([(2, rng.standard_normal((2, 2, 2)))])
        with pytest.raises(AugmentationError, match="layer mismatch"):
            geodesic_scc_loss(a, b)
        with pytest.raises(AugmentationError, match="layer mismatch"):
            preshape_feature_loss(a, b)

    def test_gradient_reaches_only_discriminator(self, gen, disc, rng):
        real = np.tanh(rng.standard_normal((4, 1, 16, 16)))
        omega = sample_dirichlet(4, 1.0, rng)
        pseudo = pseudo_source_features(discriminator_forward(disc, real).features, omega)
        z_bar = anchor_latent(rng.standard_normal((4, 8)), omega)
        ancora, _ = generator_forward(gen, z_bar[None, :])
        saida = discriminator_forward(disc, ancora.detach(), source="generated")

        zero_grads(list(gen.params.values()) + list(disc.params.values()))
        geodesic_scc_loss(pseudo, target_features(saida.features, z_bar)).backward()
        assert all(p.grad is None for p in gen.params.values())
        assert any(np.any(p.grad != 0) for p in disc.params.values() if p.grad is not None)

    def test_target_features_projected(self, rng):
        stack = FeatureStack([(1, Tensor(rng.standard_normal((1, 4, 2, 2))))], source="generated")
        alvo = target_features(stack, np.zeros(3))
        mapa = alvo.layers[0][1].data
        assert mapa.shape == (4, 2, 2)
        assert np.linalg.norm(mapa) == pytest.approx(1.0, abs=1e-9)


class TestAugmentDirectory:

    def test_writes_layers_and_weights(self, rng, tmp_path):
        entrada = tmp_path / "feats"
        write_tensor(entrada / "layer1.gsl1", rng.standard_normal((3, 4, 2, 2)))
        write_tensor(entrada / "layer2.gsl1", rng.standard_normal((3, 2, 2, 2)))
        escritos = augment_directory(entrada, n=5, alpha=1.0, seed=0, out_dir=tmp_path / "out")
        assert set(escritos) == {"layer1", "layer2", "omega"}
        assert read_tensor(escritos["layer1"]).shape == (5, 4, 2, 2)
        pesos = read_tensor(escritos["omega"])
        assert pesos.shape == (5, 3)
        np.testing.assert_allclose(pesos.sum(axis=1), 1.0, atol=1e-12)

    def test_empty_directory(self, tmp_path):
        (tmp_path / "vazio").mkdir()
        with pytest.raises(AugmentationError, match="nenhum tensor"):
            augment_directory(tmp_path / "vazio", n=1, alpha=1.0, seed=0, out_dir=tmp_path / "out")
