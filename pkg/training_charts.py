"""
Módulo para visualização dos resultados de treinamento.

Este módulo contém funções para criar os gráficos do histórico de perdas, do
log de métricas e da comparação da ablação, e para gravá-los em HTML.
"""

from pathlib import Path
from typing import Dict, Union

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

# Identificador fixo do div para que execuções repetidas gerem o mesmo HTML
CHART_DIV_ID = "itbgs-chart"

CORES_PERDAS = {
    "l_adv_g": "#2196F3",
    "l_adv_d": "#F44336",
    "l_inp": "#FFC107",
    "l_dr": "#4CAF50",
    "l_g": "#9C27B0",
}


def criar_grafico_perdas(historico: pd.DataFrame) -> go.Figure:
    """
    Cria o gráfico das componentes e dos totais de perda por passo.

    Args:
        historico: DataFrame com as colunas de LOSS_COLUMNS.

    Returns:
        go.Figure: Figura com componentes (acima) e totais (abaixo).
    """
    fig = make_subplots(rows=2, cols=1, shared_xaxes=True, vertical_spacing=0.08,
                        subplot_titles=("Componentes", "Objetivos totais"))

    # Componentes das perdas
    for coluna, cor in CORES_PERDAS.items():
        fig.add_trace(
            go.Scatter(x=historico["step"], y=historico[coluna], name=coluna, mode="lines", line=dict(color=cor)),
            row=1, col=1,
        )

    # Totais L^G e L^D
    fig.add_trace(
        go.Scatter(x=historico["step"], y=historico["total_g"], name="L^G", mode="lines", line=dict(color="#0D47A1")),
        row=2, col=1,
    )
    fig.add_trace(
        go.Scatter(x=historico["step"], y=historico["total_d"], name="L^D", mode="lines", line=dict(color="#B71C1C")),
        row=2, col=1,
    )

    fig.update_layout(
        title="Histórico de Perdas do Treinamento",
        height=700,
        hovermode="x unified",
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
    )
    fig.update_xaxes(title_text="Passo", row=2, col=1)
    return fig


def criar_grafico_metricas(metricas: pd.DataFrame) -> go.Figure:
    """
    Cria o gráfico de diversidade, ffd e suavidade ao longo do treinamento.
    """
    fig = make_subplots(rows=1, cols=3, subplot_titles=("Diversidade", "FFD", "Suavidade"))
    for i, coluna in enumerate(("diversity", "ffd", "smoothness"), start=1):
        fig.add_trace(go.Scatter(x=metricas["step"], y=metricas[coluna], name=coluna, mode="lines+markers"),
                      row=1, col=i)
    fig.update_layout(title="Métricas de Avaliação", height=400, showlegend=False)
    return fig


def criar_grafico_ablacao(resumo: pd.DataFrame) -> go.Figure:
    """
    Cria o gráfico de barras com as medianas de cada preset da ablação.

    Args:
        resumo: DataFrame com colunas preset, diversity, ffd e smoothness.

    Returns:
        go.Figure: Barras por preset, uma coluna por métrica.
    """
    fig = make_subplots(rows=1, cols=3, subplot_titles=("Diversidade (mediana)", "FFD (mediana)",
                                                        "Suavidade (mediana)"))
    for i, coluna in enumerate(("diversity", "ffd", "smoothness"), start=1):
        fig.add_trace(
            go.Bar(x=resumo["preset"], y=resumo[coluna], name=coluna, text=resumo[coluna].round(3),
                   textposition="auto"),
            row=1, col=i,
        )

    # Linha de referência de transições uniformes
    fig.add_hline(y=1.0, line_dash="dash", line_color="gray", row=1, col=3)
    fig.update_layout(title="Comparação da Ablação FAGS x I&R", height=450, showlegend=False)
    return fig


def salvar_figura(fig: go.Figure, path: Union[str, Path]) -> Path:
    """
    Grava a figura como HTML (plotly.js via CDN), com div de id fixo.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs="cdn", full_html=True, div_id=CHART_DIV_ID)
    return path


def salvar_graficos(figuras: Dict[str, go.Figure], out_dir: Union[str, Path]) -> Dict[str, Path]:
    return {nome: salvar_figura(fig, Path(out_dir) / f"{nome}.html") for nome, fig in figuras.items()}
