"""
Módulo da ablação FAGS x I&R.

Este módulo contém a execução da grade de presets (FAGS ligado/desligado x
I&R ligado/desligado, mais as variantes estendidas) sobre várias sementes e a
consolidação dos resultados em CSV e gráfico.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from config import ABLATION_EXTENDED, ABLATION_PRESETS, TrainConfig
from training import train
from training_charts import criar_grafico_ablacao, salvar_figura

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["preset", "seed", "step", "l_adv_g", "l_adv_d", "l_inp", "l_dr", "l_g",
                    "diversity", "ffd", "smoothness"]


@dataclass
class AblationResult:
    runs: pd.DataFrame
    summary: pd.DataFrame
    runs_csv: Path
    summary_csv: Path
    chart: Path


def ablation_presets(extended: bool = False) -> Dict[str, Dict[str, object]]:
    """
    Presets da ablação, na ordem de execução.

    Args:
        extended: Inclui inp_only, fags_direct e fags_smooth_l1.

    Returns:
        Dict[str, Dict[str, object]]: Sobrescritas da TrainConfig por preset.
    """
    presets = dict(ABLATION_PRESETS)
    if extended:
        presets.update(ABLATION_EXTENDED)
    return presets


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """
    Medianas por preset de diversidade, ffd e suavidade.
    """
    ordem = list(dict.fromkeys(runs["preset"]))
    resumo = runs.groupby("preset", sort=False)[["diversity", "ffd", "smoothness"]].median()
    return resumo.reindex(ordem).reset_index()


def run_ablation(config: TrainConfig, seeds: Optional[Sequence[int]] = None, extended: bool = False,
                 out_dir: Optional[str] = None) -> AblationResult:
    """
    Treina cada preset com cada semente e grava a comparação.

    Args:
        config: Configuração base (os presets sobrescrevem as chaves de ablação).
        seeds: Sementes (padrão: seed, seed + 1 e seed + 2 da configuração).
        extended: Inclui os presets estendidos.
        out_dir: Diretório da ablação (padrão: config.out_dir).

    Returns:
        AblationResult: Tabelas por execução e por preset e os arquivos escritos.
    """
    sementes = list(seeds) if seeds else [config.seed, config.seed + 1, config.seed + 2]
    base = Path(out_dir or config.out_dir)

    linhas: List[Dict[str, object]] = []
    for preset, sobrescritas in ablation_presets(extended).items():
        for semente in sementes:
            execucao = config.replace(
                seed=semente,
                out_dir=str(base / preset / f"seed_{semente}"),
                resume="",
                **sobrescritas,
            )
            logger.info("Ablação: preset %s, semente %d", preset, semente)
            resultado = train(execucao)
            metricas = resultado.last_metrics
            linha = {"preset": preset, "seed": semente}
            linha.update(metricas.as_dict() if metricas is not None else {"step": resultado.state.step})
            linhas.append(linha)

    runs = pd.DataFrame(linhas, columns=ABLATION_COLUMNS)
    resumo = summarize(runs)

    runs_csv = base / "ablation.csv"
    summary_csv = base / "ablation_summary.csv"
    base.mkdir(parents=True, exist_ok=True)
    runs.to_csv(runs_csv, index=False, float_format="%.17g")
    resumo.to_csv(summary_csv, index=False, float_format="%.17g")
    grafico = salvar_figura(criar_grafico_ablacao(resumo), base / "ablation.html")
    logger.info("Ablação concluída: %d execuções em %s", len(runs), base)
    return AblationResult(runs=runs, summary=resumo, runs_csv=runs_csv, summary_csv=summary_csv, chart=grafico)
