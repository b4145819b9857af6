"""
Módulo de persistência de checkpoints do treinamento.

Cada checkpoint é um diretório out_dir/checkpoints/step_XXXXXX com um
manifest.txt (key=value), um arquivo GSL1 por parâmetro e por momento do Adam
e o histórico de perdas em CSV. O diretório é escrito com nome temporário e
renomeado; o ponteiro LATEST é atualizado com os.replace.
"""

import json
import logging
import os
import shutil
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from config import CHECKPOINT_VERSION, TrainConfig, parse_key_values
from iandr import Lambdas, LossReport
from networks import DiscriminatorNet, GeneratorNet, init_discriminator, init_generator
from tensor import parameter
from tensor_io import GSL1_SUFFIX, TensorFormatError, read_tensor, write_tensor
from training import AdamState, TrainState, history_frame

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
HISTORY = "history.csv"
LATEST = "LATEST"


class CheckpointError(ValueError):
    """Checkpoint ausente, corrompido ou de versão incompatível."""


def checkpoint_dir(out_dir: Union[str, Path], step: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"step_{step:06d}"


def _write_group(directory: Path, arrays: Dict[str, np.ndarray]) -> None:
    for nome, valores in arrays.items():
        write_tensor(directory / f"{nome}{GSL1_SUFFIX}", valores)


def save_checkpoint(state: TrainState, out_dir: Union[str, Path], config: TrainConfig) -> Path:
    """
    Grava o estado do treinamento de forma atômica.

    Args:
        state: Estado a gravar.
        out_dir: Diretório da execução.
        config: Configuração (semente e hiperparâmetros do Adam no manifesto).

    Returns:
        Path: Diretório do checkpoint.
    """
    destino = checkpoint_dir(out_dir, state.step)
    temporario = destino.with_name(destino.name + ".tmp")
    if temporario.exists():
        shutil.rmtree(temporario)
    temporario.mkdir(parents=True)

    _write_group(temporario / "gen", {n: p.data for n, p in state.gen.params.items()})
    _write_group(temporario / "disc", {n: p.data for n, p in state.disc.params.items()})
    for rotulo, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        _write_group(temporario / rotulo / "m", opt.m)
        _write_group(temporario / rotulo / "v", opt.v)

    historico = history_frame(state.history)
    for i, nome in enumerate(("lambda1", "lambda2", "lambda3")):
        historico[nome] = [r.lambdas[i] for r in state.history]
    historico.to_csv(temporario / HISTORY, index=False, float_format="%.17g")

    manifesto = {
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "seed": config.seed,
        "latent_dim": state.gen.latent_dim,
        "image_size": state.gen.image_size,
        "tap_layers": ",".join(str(l) for l in state.disc.tap_layers),
        "gen_params": ",".join(state.gen.params),
        "disc_params": ",".join(state.disc.params),
        "opt_g": json.dumps([state.opt_g.lr, state.opt_g.beta1, state.opt_g.beta2, state.opt_g.eps, state.opt_g.step]),
        "opt_d": json.dumps([state.opt_d.lr, state.opt_d.beta1, state.opt_d.beta2, state.opt_d.eps, state.opt_d.step]),
        "rng_state": json.dumps(state.rng.bit_generator.state, sort_keys=True),
    }
    texto = "".join(f"{chave}={valor}\n" for chave, valor in manifesto.items())
    (temporario / MANIFEST).write_text(texto, encoding="utf-8")

    if destino.exists():
        shutil.rmtree(destino)
    os.replace(temporario, destino)

    ponteiro = destino.parent / (LATEST + ".tmp")
    ponteiro.write_text(destino.name + "\n", encoding="utf-8")
    os.replace(ponteiro, destino.parent / LATEST)
    logger.info("Checkpoint salvo em %s", destino)
    return destino


def resolve_checkpoint(path: Union[str, Path]) -> Path:
    """
    Aceita o diretório do checkpoint, o diretório checkpoints/ ou o da execução.
    """
    path = Path(path)
    for base in (path, path / "checkpoints"):
        if (base / MANIFEST).is_file():
            return base
        ponteiro = base / LATEST
        if ponteiro.is_file():
            return base / ponteiro.read_text(encoding="utf-8").strip()
    raise CheckpointError(f"checkpoint não encontrado em {path}")


def _read_group(directory: Path, nomes, formas: Dict[str, tuple]) -> Dict[str, np.ndarray]:
    valores = {}
    for nome in nomes:
        arquivo = directory / f"{nome}{GSL1_SUFFIX}"
        try:
            valores[nome] = read_tensor(arquivo)
        except TensorFormatError as e:
            raise CheckpointError(f"corrupt checkpoint: {e}") from e
        if valores[nome].shape != formas[nome]:
            raise CheckpointError(
                f"corrupt checkpoint: {arquivo.name} com forma {valores[nome].shape}, esperado {formas[nome]}"
            )
    return valores


def _read_history(path: Path) -> list:
    if not path.is_file():
        raise CheckpointError(f"corrupt checkpoint: {path.name} ausente")
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    historico = []
    for linha in df.itertuples(index=False):
        historico.append(LossReport(
            l_adv_g=float(linha.l_adv_g), l_adv_d=float(linha.l_adv_d), l_inp=float(linha.l_inp),
            l_dr=float(linha.l_dr), l_g=float(linha.l_g), total_g=float(linha.total_g),
            total_d=float(linha.total_d),
            lambdas=Lambdas(float(linha.lambda1), float(linha.lambda2), float(linha.lambda3)),
        ))
    return historico


def _adam_from_manifest(texto: str, diretorio: Path, formas: Dict[str, tuple]) -> AdamState:
    lr, beta1, beta2, eps, passo = json.loads(texto)
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=int(passo),
        m=_read_group(diretorio / "m", formas, formas),
        v=_read_group(diretorio / "v", formas, formas),
    )


def load_checkpoint(path: Union[str, Path], config: Optional[TrainConfig] = None) -> TrainState:
    """
    Restaura o estado do treinamento.

    Args:
        path: Checkpoint (ou diretório da execução com checkpoints/LATEST).
        config: Se informada, fornece taxas de aprendizado e betas do Adam.

    Returns:
        TrainState: Estado idêntico ao gravado.

    Raises:
        CheckpointError: Versão incompatível (ambas citadas), arquivo
            truncado ("corrupt checkpoint") ou arquitetura divergente.
    """
    diretorio = resolve_checkpoint(path)
    try:
        manifesto = parse_key_values((diretorio / MANIFEST).read_text(encoding="utf-8").splitlines(), MANIFEST)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint: manifesto ilegível ({e})") from e

    versao = int(manifesto.get("version", -1))
    if versao != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"versão do checkpoint {versao} incompatível com a versão suportada {CHECKPOINT_VERSION}"
        )

    try:
        latent_dim = int(manifesto["latent_dim"])
        image_size = int(manifesto["image_size"])
        taps = tuple(int(t) for t in manifesto["tap_layers"].split(",") if t)
        passo = int(manifesto["step"])
        rng_state = json.loads(manifesto["rng_state"])
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint: manifesto incompleto ({e})") from e

    # Modelos de referência fornecem nomes e formas esperadas
    modelo_g = init_generator(latent_dim, image_size, np.random.default_rng(0))
    modelo_d = init_discriminator(image_size, np.random.default_rng(0), taps)
    formas_g = {n: p.shape for n, p in modelo_g.params.items()}
    formas_d = {n: p.shape for n, p in modelo_d.params.items()}
    if manifesto.get("gen_params", "").split(",") != list(formas_g) or \
            manifesto.get("disc_params", "").split(",") != list(formas_d):
        raise CheckpointError("arquitetura do checkpoint difere da arquitetura atual")

    gen = GeneratorNet(latent_dim=latent_dim, image_size=image_size, params={
        n: parameter(v, n) for n, v in _read_group(diretorio / "gen", formas_g, formas_g).items()
    })
    disc = DiscriminatorNet(image_size=image_size, tap_layers=taps, params={
        n: parameter(v, n) for n, v in _read_group(diretorio / "disc", formas_d, formas_d).items()
    })
    opt_g = _adam_from_manifest(manifesto["opt_g"], diretorio / "opt_g", formas_g)
    opt_d = _adam_from_manifest(manifesto["opt_d"], diretorio / "opt_d", formas_d)
    if config is not None:
        opt_g.lr, opt_g.beta1, opt_g.beta2 = config.lr_g, config.beta1, config.beta2
        opt_d.lr, opt_d.beta1, opt_d.beta2 = config.lr_d, config.beta1, config.beta2

    rng = np.random.default_rng()
    try:
        rng.bit_generator.state = rng_state
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint: estado do gerador aleatório inválido ({e})") from e

    historico = _read_history(diretorio / HISTORY)
    if len(historico) != passo:
        raise CheckpointError(f"corrupt checkpoint: histórico com {len(historico)} linhas para o passo {passo}")

    logger.info("Checkpoint carregado de %s (passo %d)", diretorio, passo)
    return TrainState(step=passo, gen=gen, disc=disc, opt_g=opt_g, opt_d=opt_d, rng=rng, history=historico)


def checkpoint_seed(path: Union[str, Path]) -> int:
    """Semente gravada no manifesto do checkpoint."""
    diretorio = resolve_checkpoint(path)
    manifesto = parse_key_values((diretorio / MANIFEST).read_text(encoding="utf-8").splitlines(), MANIFEST)
    return int(manifesto.get("seed", 0))
