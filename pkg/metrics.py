"""
Módulo de métricas de avaliação em escala de bancada.

Este módulo contém as métricas substitutas usadas durante o treinamento:
diversidade média entre pares de amostras, distância de Fréchet entre
features do discriminador e a suavidade de um caminho de interpolação.
"""

import itertools
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from config import METRICS_COLUMNS, TrainConfig
from iandr import InterpolationSpec, LossReport, interpolation_set, pool_features
from networks import DiscriminatorNet, GeneratorNet, discriminator_forward, generator_forward

logger = logging.getLogger(__name__)

# Regularização da diagonal das covariâncias
FFD_LOADING = 1e-6


class MetricsError(ValueError):
    """Entrada inválida para uma métrica."""


@dataclass
class MetricsRow:
    """
    Uma linha do log de métricas (uma avaliação).
    """
    step: int
    l_adv_g: float
    l_adv_d: float
    l_inp: float
    l_dr: float
    l_g: float
    diversity: float
    ffd: float
    smoothness: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def pairwise_diversity(images: np.ndarray) -> float:
    """
    Média, sobre todos os pares não ordenados, da distância L2 por pixel.

    Cada distância é ||a - b|| / sqrt(N), com N o número de pixels, de modo
    que duas imagens diferindo de 1 em todos os pixels distam 1.0.

    Args:
        images: Conjunto de n >= 2 imagens de mesma forma.

    Returns:
        float: Diversidade média.
    """
    imagens = np.asarray(images, dtype=np.float64)
    n = imagens.shape[0] if imagens.ndim else 0
    if n < 2:
        raise MetricsError(f"diversidade exige ao menos 2 imagens (recebido {n})")
    planas = imagens.reshape(n, -1)
    escala = np.sqrt(planas.shape[1])
    distancias = [np.linalg.norm(planas[i] - planas[j]) / escala for i, j in itertools.combinations(range(n), 2)]
    return float(np.mean(distancias))


def _psd_sqrt(matriz: np.ndarray) -> np.ndarray:
    simetrica = 0.5 * (matriz + matriz.T)
    autovalores, autovetores = np.linalg.eigh(simetrica)
    return (autovetores * np.sqrt(np.clip(autovalores, 0.0, None))) @ autovetores.T


def frechet_feature_distance(real_feats: np.ndarray, fake_feats: np.ndarray) -> float:
    """
    Distância de Fréchet entre as gaussianas ajustadas a dois conjuntos de features.

    ||mu_r - mu_f||^2 + tr(S_r + S_f - 2 (S_r S_f)^(1/2)), com 1e-6 somado à
    diagonal das covariâncias e raiz quadrada por autodecomposição.

    Args:
        real_feats: Matriz n x D (ou vetor de n valores escalares).
        fake_feats: Matriz m x D.

    Returns:
        float: Distância não negativa.
    """
    reais = np.asarray(real_feats, dtype=np.float64)
    falsas = np.asarray(fake_feats, dtype=np.float64)
    reais = reais.reshape(-1, 1) if reais.ndim == 1 else reais
    falsas = falsas.reshape(-1, 1) if falsas.ndim == 1 else falsas
    if reais.shape[1] != falsas.shape[1]:
        raise MetricsError(f"dimensões de features diferentes: {reais.shape[1]} e {falsas.shape[1]}")
    if reais.shape[0] < 2 or falsas.shape[0] < 2:
        raise MetricsError("a distância de Fréchet exige ao menos 2 vetores de cada lado")

    identidade = np.eye(reais.shape[1]) * FFD_LOADING
    sigma_r = np.atleast_2d(np.cov(reais, rowvar=False)) + identidade
    sigma_f = np.atleast_2d(np.cov(falsas, rowvar=False)) + identidade
    diferenca = reais.mean(axis=0) - falsas.mean(axis=0)

    # tr((S_r S_f)^(1/2)) = tr((A S_f A)^(1/2)) com A = S_r^(1/2)
    raiz_r = _psd_sqrt(sigma_r)
    produto = raiz_r @ sigma_f @ raiz_r
    traco_raiz = np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (produto + produto.T)), 0.0, None)))

    distancia = float(diferenca @ diferenca + np.trace(sigma_r) + np.trace(sigma_f) - 2.0 * traco_raiz)
    return max(distancia, 0.0)


def smoothness_from_features(features: np.ndarray) -> float:
    """
    Razão máximo / média das distâncias consecutivas (não cíclicas) entre as
    features reduzidas como em L_dr. Caminho degenerado devolve 1.0.
    """
    reduzidas = pool_features(features).data
    k = reduzidas.shape[0]
    planas = reduzidas.reshape(k, -1)
    distancias = np.linalg.norm(planas[1:] - planas[:-1], axis=1)
    media = distancias.mean()
    if media <= 0.0:
        return 1.0
    return float(distancias.max() / media)


def interpolation_smoothness(gen: GeneratorNet, z_start: np.ndarray, z_end: np.ndarray, k: int) -> float:
    """
    Suavidade do caminho de interpolação: 1.0 para transições uniformes,
    valores grandes para saltos em degrau.

    Args:
        gen: Gerador.
        z_start: Latente inicial.
        z_end: Latente final.
        k: Número de interpolações (>= 3).

    Returns:
        float: max / média das distâncias consecutivas das features.
    """
    if k < 3:
        raise MetricsError(f"a suavidade exige k >= 3 (recebido {k})")
    latentes = interpolation_set(InterpolationSpec(z_start, z_end, k))
    _, features = generator_forward(gen, latentes)
    return smoothness_from_features(features.data)


def evaluate(gen: GeneratorNet, disc: DiscriminatorNet, real_images: np.ndarray, config: TrainConfig,
             step: int, report: Optional[LossReport] = None, samples: Optional[int] = None) -> MetricsRow:
    """
    Calcula uma linha de métricas para o estado atual das redes.

    Usa um gerador aleatório próprio, semeado por (seed, step), para não
    interferir na sequência do treinamento.

    Args:
        gen: Gerador.
        disc: Discriminador.
        real_images: Imagens reais (M, 1, S, S).
        config: Configuração da execução.
        step: Passo avaliado.
        report: Perdas do passo (NaN se ausente).
        samples: Número de amostras geradas (padrão config.eval_samples).

    Returns:
        MetricsRow: Métricas do passo.
    """
    rng = np.random.default_rng([config.seed, step])
    n = samples or config.eval_samples
    z = rng.standard_normal((n, gen.latent_dim))
    geradas, _ = generator_forward(gen, z)
    geradas = geradas.data

    diversidade = pairwise_diversity(geradas)

    if len(real_images) >= 2:
        reais = discriminator_forward(disc, real_images).embedding.data
        falsas = discriminator_forward(disc, geradas).embedding.data
        ffd = frechet_feature_distance(reais, falsas)
    else:
        logger.warning("Conjunto com uma imagem: ffd indefinida no passo %d", step)
        ffd = float("nan")

    z_inicio, z_fim = rng.standard_normal(gen.latent_dim), rng.standard_normal(gen.latent_dim)
    suavidade = interpolation_smoothness(gen, z_inicio, z_fim, max(config.interp_size, 3))

    perdas = report.as_row(step) if report is not None else {c: float("nan") for c in METRICS_COLUMNS}
    return MetricsRow(
        step=step,
        l_adv_g=perdas["l_adv_g"],
        l_adv_d=perdas["l_adv_d"],
        l_inp=perdas["l_inp"],
        l_dr=perdas["l_dr"],
        l_g=perdas["l_g"],
        diversity=diversidade,
        ffd=ffd,
        smoothness=suavidade,
    )


def reset_metrics(path: Union[str, Path], last_step: int = 0) -> Path:
    """
    Descarta do CSV de métricas as linhas com step > last_step.

    Com last_step = 0 (execução nova) o arquivo é removido.
    """
    path = Path(path)
    if not path.is_file():
        return path
    if last_step <= 0:
        path.unlink()
        return path
    tabela = pd.read_csv(path, float_precision="round_trip")
    tabela = tabela[tabela["step"] <= last_step]
    tabela.to_csv(path, index=False, float_format="%.17g")
    logger.debug("Métricas após o passo %d descartadas de %s", last_step, path)
    return path


def append_metrics(path: Union[str, Path], row: MetricsRow) -> Path:
    """
    Acrescenta uma linha ao CSV de métricas (cabeçalho na primeira escrita).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([row.as_dict()], columns=METRICS_COLUMNS)
    df.to_csv(path, mode="a", header=not path.exists(), index=False, float_format="%.17g")
    return path
