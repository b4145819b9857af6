"""Testes das métricas de avaliação."""

import logging

import numpy as np
import pandas as pd
import pytest

from config import METRICS_COLUMNS, TrainConfig
from iandr import total_objectives
from metrics import (
    MetricsError,
    append_metrics,
    evaluate,
    frechet_feature_distance,
    interpolation_smoothness,
    pairwise_diversity,
    reset_metrics,
    smoothness_from_features,
)


class TestDiversity:

    def test_constant_offset_is_one(self):
        imagens = np.stack([np.zeros((1, 4, 4)), np.ones((1, 4, 4))])
        assert pairwise_diversity(imagens) == pytest.approx(1.0)

    def test_identical_images_zero(self):
        assert pairwise_diversity(np.ones((3, 1, 2, 2))) == 0.0

    def test_needs_two_images(self):
        with pytest.raises(MetricsError):
            pairwise_diversity(np.ones((1, 1, 2, 2)))


class TestFrechet:

    def test_identical_sets(self, rng):
        x = rng.standard_normal((50, 3))
        assert frechet_feature_distance(x, x) == pytest.approx(0.0, abs=1e-6)

    def test_symmetric(self, rng):
        a = rng.standard_normal((40, 4))
        b = 2.0 * rng.standard_normal((30, 4)) + 1.0
        assert frechet_feature_distance(a, b) == pytest.approx(frechet_feature_distance(b, a), abs=1e-8)

    def test_mean_shift_closed_form(self):
        gerador = np.random.default_rng(0)
        a = gerador.standard_normal(10000)
        b = gerador.standard_normal(10000) + 1.0
        assert frechet_feature_distance(a, b) == pytest.approx(1.0, abs=0.1)

    def test_scale_closed_form(self):
        gerador = np.random.default_rng(1)
        a = gerador.standard_normal(10000)
        b = 2.0 * gerador.standard_normal(10000)
        assert frechet_feature_distance(a, b) == pytest.approx(1.0, abs=0.1)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(MetricsError, match="dimensões"):
            frechet_feature_distance(rng.standard_normal((5, 2)), rng.standard_normal((5, 3)))


class TestSmoothness:

    def test_linear_features_are_uniform(self):
        passos = np.arange(5.0).reshape(5, 1, 1, 1) * np.ones((5, 2, 4, 4))
        assert smoothness_from_features(passos) == pytest.approx(1.0, abs=1e-9)

    def test_step_jump_is_large(self):
        features = np.zeros((6, 1, 4, 4))
        features[3:] = 1.0
        assert smoothness_from_features(features) == pytest.approx(5.0)

    def test_constant_path(self):
        assert smoothness_from_features(np.ones((4, 1, 4, 4))) == 1.0

    def test_requires_three_points(self, gen):
        with pytest.raises(MetricsError, match="k >= 3"):
            interpolation_smoothness(gen, np.zeros(8), np.ones(8), 2)

    def test_generator_path(self, gen, rng):
        assert interpolation_smoothness(gen, rng.standard_normal(8), rng.standard_normal(8), 6) >= 1.0


class TestEvaluate:

    def test_row_and_csv(self, gen, disc, rng, tmp_path):
        config = TrainConfig(latent_dim=8, image_size=16, eval_samples=4, seed=3)
        reais = np.tanh(rng.standard_normal((5, 1, 16, 16)))
        report = total_objectives(0.1, 0.2, 0.3, 0.4, 0.5)
        linha = evaluate(gen, disc, reais, config, step=10, report=report)
        assert linha.step == 10
        assert linha.l_g == 0.5
        assert np.isfinite([linha.diversity, linha.ffd, linha.smoothness]).all()

        caminho = tmp_path / "metrics.csv"
        append_metrics(caminho, linha)
        append_metrics(caminho, linha)
        tabela = pd.read_csv(caminho)
        assert list(tabela.columns) == METRICS_COLUMNS
        assert len(tabela) == 2

    def test_same_step_same_metrics(self, gen, disc, rng):
        config = TrainConfig(latent_dim=8, image_size=16, eval_samples=3)
        reais = np.tanh(rng.standard_normal((4, 1, 16, 16)))
        report = total_objectives(1.0, 1.0)
        assert evaluate(gen, disc, reais, config, 5, report) == evaluate(gen, disc, reais, config, 5, report)

    def test_single_real_image_gives_nan_ffd(self, gen, disc, caplog):
        config = TrainConfig(latent_dim=8, image_size=16, eval_samples=3)
        with caplog.at_level(logging.WARNING):
            linha = evaluate(gen, disc, np.zeros((1, 1, 16, 16)), config, 1)
        assert np.isnan(linha.ffd)
        assert np.isnan(linha.l_adv_g)
        assert "ffd indefinida" in caplog.text

    def test_reset_keeps_rows_up_to_step(self, gen, disc, rng, tmp_path):
        config = TrainConfig(latent_dim=8, image_size=16, eval_samples=3)
        reais = np.tanh(rng.standard_normal((4, 1, 16, 16)))
        caminho = tmp_path / "metrics.csv"
        for passo in (2, 4, 6):
            append_metrics(caminho, evaluate(gen, disc, reais, config, passo, total_objectives(1.0, 1.0)))

        reset_metrics(caminho, 4)
        assert list(pd.read_csv(caminho)["step"]) == [2, 4]
        reset_metrics(caminho, 0)
        assert not caminho.exists()
