"""Testes da grade de ablação e dos gráficos."""

import numpy as np
import pandas as pd
import pytest

from ablation import ABLATION_COLUMNS, ablation_presets, run_ablation, summarize
from config import TrainConfig
from image_data import make_blob_dataset
from training_charts import CHART_DIV_ID, criar_grafico_ablacao, criar_grafico_perdas, salvar_figura


class TestPresets:

    def test_basic_grid(self):
        assert list(ablation_presets()) == ["itbgs", "fags_only", "iandr_only", "plain_gan"]

    def test_extended_grid(self):
        presets = ablation_presets(extended=True)
        assert presets["inp_only"]["dr_on"] is False
        assert presets["fags_direct"]["fags_source"] == "direct"

    def test_summary_medians_in_preset_order(self):
        runs = pd.DataFrame({
            "preset": ["b", "b", "b", "a"],
            "diversity": [1.0, 3.0, 2.0, 5.0],
            "ffd": [0.0, 0.0, 0.0, 1.0],
            "smoothness": [1.0, 1.0, 4.0, 2.0],
        })
        resumo = summarize(runs)
        assert list(resumo["preset"]) == ["b", "a"]
        assert list(resumo["diversity"]) == [2.0, 5.0]


def test_run_ablation_writes_comparison(tiny_config, tmp_path):
    resultado = run_ablation(tiny_config.replace(steps=2), seeds=[0, 1], out_dir=str(tmp_path / "abl"))
    assert list(resultado.runs.columns) == ABLATION_COLUMNS
    assert len(resultado.runs) == 8
    assert resultado.runs_csv.is_file() and resultado.summary_csv.is_file()
    assert CHART_DIV_ID in resultado.chart.read_text(encoding="utf-8")
    assert (tmp_path / "abl" / "plain_gan" / "seed_1" / "losses.csv").is_file()
    assert np.isfinite(resultado.runs[["diversity", "smoothness"]].to_numpy()).all()


def test_loss_chart_html(tmp_path):
    historico = pd.DataFrame({c: [1.0, 2.0] for c in
                              ["step", "l_adv_g", "l_adv_d", "l_inp", "l_dr", "l_g", "total_g", "total_d"]})
    caminho = salvar_figura(criar_grafico_perdas(historico), tmp_path / "perdas.html")
    assert f'id="{CHART_DIV_ID}"' in caminho.read_text(encoding="utf-8")


def test_ablation_chart_has_one_bar_trace_per_metric():
    resumo = pd.DataFrame({"preset": ["itbgs"], "diversity": [0.5], "ffd": [1.0], "smoothness": [1.2]})
    assert len(criar_grafico_ablacao(resumo).data) == 3


@pytest.mark.slow
def test_desk_scale_ablation(tmp_path):
    """Grade completa de bancada: 10 manchas 16x16, 2000 passos, 3 sementes."""
    make_blob_dataset(tmp_path / "blobs", n=10, size=16, seed=0)
    config = TrainConfig(latent_dim=64, image_size=16, steps=2000, dataset=str(tmp_path / "blobs"),
                         out_dir=str(tmp_path / "abl"), checkpoint_every=1000, eval_every=1000)
    resultado = run_ablation(config, seeds=[0, 1, 2])
    runs = resultado.runs

    for preset in ("itbgs", "fags_only", "iandr_only", "plain_gan"):
        for semente in (0, 1, 2):
            perdas = pd.read_csv(tmp_path / "abl" / preset / f"seed_{semente}" / "losses.csv")
            assert np.isfinite(perdas.drop(columns="step").to_numpy()).all()

    com_iandr = runs[runs["preset"].isin(["itbgs", "iandr_only"])]["smoothness"].median()
    sem_iandr = runs[runs["preset"].isin(["fags_only", "plain_gan"])]["smoothness"].median()
    assert com_iandr <= 0.8 * sem_iandr

    itbgs = runs[runs["preset"] == "itbgs"]["diversity"].median()
    plain = runs[runs["preset"] == "plain_gan"]["diversity"].median()
    assert itbgs >= plain
