"""Testes do passo de treinamento e da orquestração."""

import numpy as np
import pandas as pd
import pytest

from checkpoint import checkpoint_dir, load_checkpoint
from config import LOSS_COLUMNS, TrainConfig
from image_data import DatasetError
from training import (
    TrainingError,
    adam_update,
    init_adam,
    init_train_state,
    sample_batch_indices,
    train,
    train_step,
)
from tensor import parameter


def _real_batch(seed: int = 0, n: int = 4) -> np.ndarray:
    return np.tanh(np.random.default_rng(seed).standard_normal((n, 1, 16, 16)))


def _config(**changes) -> TrainConfig:
    return TrainConfig(latent_dim=8, image_size=16, seed=2, **changes)


class TestAdam:

    def test_first_step_moves_by_learning_rate(self):
        p = parameter(np.array([1.0, -1.0]))
        p.grad = np.array([0.5, -3.0])
        opt = init_adam({"p": p}, lr=0.1, beta1=0.5, beta2=0.999)
        adam_update(opt, {"p": p})
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-6)
        assert opt.step == 1

    def test_missing_gradient_treated_as_zero(self):
        p = parameter(np.ones(3))
        opt = init_adam({"p": p}, lr=0.1, beta1=0.5, beta2=0.999)
        adam_update(opt, {"p": p})
        np.testing.assert_array_equal(p.data, np.ones(3))


class TestTrainStep:

    def test_report_finite_and_consistent(self):
        config = _config()
        state, report = train_step(init_train_state(config), _real_batch(), config)
        valores = [report.l_adv_g, report.l_adv_d, report.l_inp, report.l_dr, report.l_g]
        assert np.all(np.isfinite(valores))
        assert report.total_g == pytest.approx(
            report.l_adv_g - config.lambda1 * report.l_inp + config.lambda2 * report.l_dr, abs=1e-12)
        assert report.total_d == pytest.approx(
            report.l_adv_d + config.lambda1 * report.l_inp + config.lambda3 * report.l_g, abs=1e-12)
        assert state.step == 1
        assert len(state.history) == 1

    def test_plain_gan_has_zero_auxiliary_losses(self):
        config = _config(fags_on=False, iandr_on=False)
        _, report = train_step(init_train_state(config), _real_batch(), config)
        assert (report.l_g, report.l_dr, report.l_inp) == (0.0, 0.0, 0.0)

    def test_both_networks_change(self):
        config = _config()
        state = init_train_state(config)
        antes_g = {n: p.data.copy() for n, p in state.gen.params.items()}
        antes_d = {n: p.data.copy() for n, p in state.disc.params.items()}
        train_step(state, _real_batch(), config)
        assert any(not np.array_equal(antes_g[n], p.data) for n, p in state.gen.params.items())
        assert any(not np.array_equal(antes_d[n], p.data) for n, p in state.disc.params.items())

    def test_same_seed_bit_identical(self):
        config = _config()
        relatorios = []
        for _ in range(2):
            state = init_train_state(config)
            for passo in range(3):
                state, _ = train_step(state, _real_batch(passo), config)
            relatorios.append([r.as_row(0) for r in state.history])
        assert relatorios[0] == relatorios[1]

    def test_wrong_batch_size(self):
        config = _config()
        with pytest.raises(TrainingError, match="esperado 4"):
            train_step(init_train_state(config), _real_batch(n=3), config)

    @pytest.mark.parametrize("changes", [
        {"fags_source": "direct"},
        {"fags_loss": "smooth_l1"},
        {"dr_on": False},
    ])
    def test_variants_run(self, changes):
        config = _config(**changes)
        _, report = train_step(init_train_state(config), _real_batch(), config)
        assert np.isfinite(report.total_g) and np.isfinite(report.total_d)
        if not config.dr_on:
            assert report.l_dr == 0.0


class TestSampling:

    def test_uniform_with_replacement(self):
        gerador = np.random.default_rng(0)
        sorteios = np.concatenate([sample_batch_indices(gerador, 10, 4) for _ in range(10000)])
        frequencias = np.bincount(sorteios, minlength=10) / sorteios.size
        np.testing.assert_allclose(frequencias, 0.1, rtol=0.1)


class TestTrain:

    def test_zero_steps_writes_initial_checkpoint(self, tiny_config):
        resultado = train(tiny_config.replace(steps=0))
        assert resultado.checkpoint == checkpoint_dir(tiny_config.out_dir, 0)
        assert (resultado.checkpoint / "manifest.txt").is_file()
        assert len(pd.read_csv(resultado.losses_csv)) == 0

    def test_artifacts(self, tiny_config):
        resultado = train(tiny_config)
        saida = resultado.checkpoint.parent.parent
        perdas = pd.read_csv(resultado.losses_csv)
        assert list(perdas.columns) == LOSS_COLUMNS
        assert list(perdas["step"]) == [1, 2, 3]
        assert list(pd.read_csv(resultado.metrics_csv)["step"]) == [2, 3]
        assert (saida / "config.txt").is_file()
        assert (saida / "losses.html").is_file()
        assert (saida / "metrics.html").is_file()
        assert sorted(p.name for p in (saida / "checkpoints").iterdir()) == [
            "LATEST", "step_000000", "step_000002", "step_000003"]
        assert load_checkpoint(saida).step == 3

    def test_same_seed_identical_loss_csv(self, tiny_config, tmp_path):
        a = train(tiny_config.replace(out_dir=str(tmp_path / "a")))
        b = train(tiny_config.replace(out_dir=str(tmp_path / "b")))
        assert a.losses_csv.read_bytes() == b.losses_csv.read_bytes()

    def test_resume_matches_continuous_run(self, tiny_config, tmp_path):
        continuo = train(tiny_config.replace(steps=4, out_dir=str(tmp_path / "continuo")))
        parcial = train(tiny_config.replace(steps=2, out_dir=str(tmp_path / "parcial")))
        retomado = train(tiny_config.replace(steps=4, out_dir=str(tmp_path / "parcial"),
                                             resume=str(parcial.checkpoint)))
        assert retomado.losses_csv.read_bytes() == continuo.losses_csv.read_bytes()
        for nome, p in continuo.state.gen.params.items():
            np.testing.assert_array_equal(retomado.state.gen.params[nome].data, p.data)

    def test_rerun_same_out_dir_rewrites_metrics(self, tiny_config):
        primeira = train(tiny_config)
        metricas = primeira.metrics_csv.read_bytes()
        segunda = train(tiny_config)
        assert segunda.metrics_csv.read_bytes() == metricas
        assert list(pd.read_csv(segunda.metrics_csv)["step"]) == [2, 3]

    def test_resume_in_same_out_dir_drops_later_metrics(self, tiny_config, tmp_path):
        continuo = train(tiny_config.replace(steps=4, out_dir=str(tmp_path / "continuo")))
        saida = tmp_path / "mesma"
        train(tiny_config.replace(steps=4, out_dir=str(saida)))
        retomado = train(tiny_config.replace(steps=4, out_dir=str(saida),
                                             resume=str(checkpoint_dir(saida, 2))))
        assert list(pd.read_csv(retomado.metrics_csv)["step"]) == [2, 4]
        assert retomado.metrics_csv.read_bytes() == continuo.metrics_csv.read_bytes()

    def test_unreadable_dataset_fails_before_any_step(self, tiny_config, tmp_path):
        with pytest.raises(DatasetError):
            train(tiny_config.replace(dataset=str(tmp_path / "nada")))
        assert not (tmp_path / "run").exists()

    def test_image_size_mismatch(self, tiny_config):
        with pytest.raises(TrainingError, match="image_size"):
            train(tiny_config.replace(image_size=32))


@pytest.mark.slow
def test_smoke_run_all_finite(tiny_config):
    resultado = train(tiny_config.replace(steps=500, checkpoint_every=250, eval_every=250))
    perdas = pd.read_csv(resultado.losses_csv)
    assert len(perdas) == 500
    assert np.isfinite(perdas.drop(columns="step").to_numpy()).all()
