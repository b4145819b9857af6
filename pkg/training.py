"""
Módulo do laço de treinamento ITBGS.

Este módulo contém o otimizador Adam, o estado serializável do treinamento,
o passo alternado discriminador/gerador com FAGS e I&R, e a orquestração
completa (checkpoints, log de métricas, histórico de perdas e retomada).
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import LOSS_COLUMNS, NUMERIC_PARAMS, TrainConfig, dump_config
from fags import (
    FAGS_LOSS_FUNCTIONS,
    AugmentationError,
    anchor_latent,
    pseudo_source_features,
    sample_source_weights,
    target_features,
)
from iandr import (
    InterpolationSpec,
    Lambdas,
    LossError,
    LossReport,
    discriminator_adversarial_loss,
    discriminator_objective,
    distance_regularization,
    generator_adversarial_loss,
    generator_objective,
    interpolation_loss,
    interpolation_set,
    total_objectives,
)
from image_data import Dataset, load_dataset
from metrics import append_metrics, evaluate, reset_metrics
from networks import (
    DiscriminatorNet,
    GeneratorNet,
    build_networks,
    discriminator_forward,
    generator_forward,
)
from tensor import NumericalError, Tensor, zero_grads
from training_charts import criar_grafico_metricas, criar_grafico_perdas, salvar_graficos

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Falha no treinamento (componente de perda não finito, lote inválido)."""


@dataclass
class AdamState:
    """
    Momentos do Adam por parâmetro e o contador de passos.
    """
    lr: float
    beta1: float
    beta2: float
    eps: float = NUMERIC_PARAMS["adam_eps"]
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: Dict[str, Tensor], lr: float, beta1: float, beta2: float) -> AdamState:
    estado = AdamState(lr=lr, beta1=beta1, beta2=beta2)
    for nome, p in params.items():
        estado.m[nome] = np.zeros_like(p.data)
        estado.v[nome] = np.zeros_like(p.data)
    return estado


def adam_update(opt: AdamState, params: Dict[str, Tensor]) -> None:
    """
    Aplica um passo do Adam (com correção de viés) aos parâmetros.

    Parâmetros sem gradiente recebem gradiente zero.
    """
    opt.step += 1
    correcao1 = 1.0 - opt.beta1 ** opt.step
    correcao2 = 1.0 - opt.beta2 ** opt.step
    for nome, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        opt.m[nome] = opt.beta1 * opt.m[nome] + (1.0 - opt.beta1) * grad
        opt.v[nome] = opt.beta2 * opt.v[nome] + (1.0 - opt.beta2) * grad * grad
        m_hat = opt.m[nome] / correcao1
        v_hat = opt.v[nome] / correcao2
        p.data = p.data - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)


@dataclass
class TrainState:
    """
    Estado completo do treinamento: restaurável exatamente a partir de um checkpoint.
    """
    step: int
    gen: GeneratorNet
    disc: DiscriminatorNet
    opt_g: AdamState
    opt_d: AdamState
    rng: np.random.Generator
    history: List[LossReport] = field(default_factory=list)


@dataclass
class TrainResult:
    state: TrainState
    checkpoint: Path
    losses_csv: Path
    metrics_csv: Path
    last_metrics: Optional[object] = None


def init_train_state(config: TrainConfig) -> TrainState:
    """
    Cria redes e otimizadores a partir da semente da configuração.
    """
    rng = np.random.default_rng(config.seed)
    gen, disc = build_networks(config, rng)
    return TrainState(
        step=0,
        gen=gen,
        disc=disc,
        opt_g=init_adam(gen.params, config.lr_g, config.beta1, config.beta2),
        opt_d=init_adam(disc.params, config.lr_d, config.beta1, config.beta2),
        rng=rng,
    )


def sample_batch_indices(rng: np.random.Generator, n_images: int, batch_size: int) -> np.ndarray:
    """Sorteia o lote uniformemente, com reposição."""
    return rng.integers(0, n_images, size=batch_size)


@contextmanager
def _component(nome: str) -> Iterator[None]:
    try:
        yield
    except (NumericalError, LossError) as e:
        raise TrainingError(f"valor não finito em {nome}: {e}") from e


def train_step(state: TrainState, real_batch: np.ndarray, config: TrainConfig) -> Tuple[TrainState, LossReport]:
    """
    Executa uma atualização do discriminador seguida de uma do gerador.

    L^D = L^D_adv + lambda1 L_inp + lambda3 L_g minimiza sobre D; as imagens
    geradas entram desligadas de G. L^G = L^G_adv - lambda1 L_inp + lambda2
    L_dr minimiza sobre G. Um único omega por passo define a latente âncora e
    o ponto na superfície geodésica.

    Args:
        state: Estado do treinamento (atualizado in-place).
        real_batch: Lote real (batch_size, 1, S, S).
        config: Configuração da execução.

    Returns:
        Tuple[TrainState, LossReport]: Estado e perdas do passo.

    Raises:
        TrainingError: Lote com tamanho errado ou perda não finita (componente nomeado).
    """
    real = np.asarray(real_batch, dtype=np.float64)
    if real.shape[0] != config.batch_size:
        raise TrainingError(f"lote com {real.shape[0]} imagens, esperado {config.batch_size}")

    gen, disc, rng = state.gen, state.disc, state.rng
    lambdas = Lambdas.from_config(config)
    n, d = config.batch_size, gen.latent_dim

    # ------------------------------------------------------------------
    # Fase do discriminador
    # ------------------------------------------------------------------
    zero_grads(disc.params.values())
    z = rng.standard_normal((n, d))

    with _component("l_adv_d"):
        fake, _ = generator_forward(gen, z)
        real_out = discriminator_forward(disc, real, source="real")
        fake_out = discriminator_forward(disc, fake.detach(), source="generated")
        l_adv_d = discriminator_adversarial_loss(real_out.probs, fake_out.probs)

    l_inp_d, z_inp = 0.0, None
    if config.iandr_on:
        z_inp = interpolation_set(InterpolationSpec(rng.standard_normal(d), rng.standard_normal(d), config.interp_size))
        with _component("l_inp"):
            interp, _ = generator_forward(gen, z_inp)
            l_inp_d = interpolation_loss(discriminator_forward(disc, interp.detach(), source="generated").probs)

    l_g = 0.0
    if config.fags_on:
        omega = sample_source_weights(n, config.dirichlet_alpha, config.fags_source, rng)
        z_bar = anchor_latent(z, omega)
        with _component("l_g"):
            anchor_img, _ = generator_forward(gen, z_bar[None, :])
            anchor_out = discriminator_forward(disc, anchor_img.detach(), source="generated")
            try:
                pseudo = pseudo_source_features(real_out.features, omega)
                target = target_features(anchor_out.features, z_bar)
            except AugmentationError as e:
                raise TrainingError(f"falha em l_g: {e}") from e
            l_g = FAGS_LOSS_FUNCTIONS[config.fags_loss](pseudo, target)

    with _component("total_d"):
        loss_d = discriminator_objective(l_adv_d, l_inp_d, l_g, lambdas)
        loss_d.backward()
    adam_update(state.opt_d, disc.params)

    # ------------------------------------------------------------------
    # Fase do gerador (mesmas z e Z_inp)
    # ------------------------------------------------------------------
    zero_grads(gen.params.values())
    with _component("l_adv_g"):
        fake, _ = generator_forward(gen, z)
        l_adv_g = generator_adversarial_loss(discriminator_forward(disc, fake, source="generated").probs)

    l_inp_g, l_dr = 0.0, 0.0
    if config.iandr_on:
        with _component("l_inp"):
            interp, interp_feats = generator_forward(gen, z_inp)
            l_inp_g = interpolation_loss(discriminator_forward(disc, interp, source="generated").probs)
        if config.dr_on:
            with _component("l_dr"):
                l_dr = distance_regularization(interp_feats, config.interp_size)

    with _component("total_g"):
        loss_g = generator_objective(l_adv_g, l_inp_g, l_dr, lambdas)
        loss_g.backward()
    adam_update(state.opt_g, gen.params)

    # Gradientes de D acumulados na fase do gerador não são usados
    zero_grads(disc.params.values())

    with _component("LossReport"):
        report = total_objectives(l_adv_g, l_adv_d, l_inp_d, l_dr, l_g, lambdas)
    state.step += 1
    state.history.append(report)
    return state, report


def history_frame(history: List[LossReport]) -> pd.DataFrame:
    """Histórico de perdas como DataFrame (colunas LOSS_COLUMNS)."""
    linhas = [report.as_row(i + 1) for i, report in enumerate(history)]
    return pd.DataFrame(linhas, columns=LOSS_COLUMNS)


def write_losses(path: Path, history: List[LossReport]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    history_frame(history).to_csv(path, index=False, float_format="%.17g")
    return path


def _check_dataset(dataset: Dataset, config: TrainConfig) -> None:
    if dataset.image_size != config.image_size or dataset.images.shape[-2] != config.image_size:
        raise TrainingError(
            f"imagens {dataset.images.shape[-2:]} incompatíveis com image_size={config.image_size}"
        )


def train(config: TrainConfig) -> TrainResult:
    """
    Treina o par gerador/discriminador conforme a configuração.

    O conjunto é carregado antes de qualquer passo. Um checkpoint inicial é
    gravado no passo 0 (exceto ao retomar); depois a cada checkpoint_every
    passos e no último passo. Métricas são acrescentadas a metrics.csv a cada
    eval_every passos; losses.csv e o gráfico de perdas são escritos ao final.
    Uma execução nova recomeça metrics.csv; ao retomar, linhas posteriores ao
    passo do checkpoint são descartadas.

    Args:
        config: Configuração da execução.

    Returns:
        TrainResult: Estado final e caminhos dos artefatos.
    """
    from checkpoint import load_checkpoint, save_checkpoint

    dataset = load_dataset(config.dataset)
    _check_dataset(dataset, config)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(dump_config(config), encoding="utf-8")
    metrics_csv = out_dir / "metrics.csv"

    if config.resume:
        state = load_checkpoint(config.resume, config)
        logger.info("Treinamento retomado do passo %d (%s)", state.step, config.resume)
        checkpoint = Path(config.resume)
    else:
        state = init_train_state(config)
        checkpoint = save_checkpoint(state, out_dir, config)
    reset_metrics(metrics_csv, state.step)

    ultima = None
    while state.step < config.steps:
        indices = sample_batch_indices(state.rng, len(dataset), config.batch_size)
        state, report = train_step(state, dataset.batch(indices), config)

        final = state.step == config.steps
        if state.step % config.checkpoint_every == 0 or final:
            checkpoint = save_checkpoint(state, out_dir, config)
        if state.step % config.eval_every == 0 or final:
            ultima = evaluate(state.gen, state.disc, dataset.images, config, state.step, report)
            append_metrics(metrics_csv, ultima)
            logger.info(
                "Passo %d: L^G=%.4f L^D=%.4f diversidade=%.4f ffd=%.4f suavidade=%.4f",
                state.step, report.total_g, report.total_d, ultima.diversity, ultima.ffd, ultima.smoothness,
            )

    losses_csv = write_losses(out_dir / "losses.csv", state.history)
    graficos = {}
    if state.history:
        graficos["losses"] = criar_grafico_perdas(history_frame(state.history))
    if metrics_csv.is_file():
        graficos["metrics"] = criar_grafico_metricas(pd.read_csv(metrics_csv))
    salvar_graficos(graficos, out_dir)
    logger.info("Treinamento concluído no passo %d; checkpoint em %s", state.step, checkpoint)
    return TrainResult(state=state, checkpoint=checkpoint, losses_csv=losses_csv,
                       metrics_csv=metrics_csv, last_metrics=ultima)
