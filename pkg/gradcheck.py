"""
Módulo de verificação de gradientes por diferenças finitas centrais.

Este módulo contém a comparação coordenada a coordenada entre os gradientes
analíticos (passagem reversa) e numéricos, e as suítes que verificam cada
perda do treinamento nas redes de brinquedo.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config import GRADCHECK_PARAMS, TrainConfig
from fags import anchor_latent, geodesic_scc_loss, pseudo_source_features, sample_dirichlet, target_features
from iandr import (
    InterpolationSpec,
    Lambdas,
    discriminator_adversarial_loss,
    discriminator_objective,
    distance_regularization,
    generator_adversarial_loss,
    generator_objective,
    interpolation_loss,
    interpolation_set,
)
from networks import (
    DiscriminatorNet,
    GeneratorNet,
    discriminator_forward,
    generator_forward,
    init_discriminator,
    init_generator,
)
from tensor import NumericalError, Tensor, zero_grads

logger = logging.getLogger(__name__)

GRADCHECK_TARGETS = ("lg", "ldr", "linp", "adv", "objectives")

ParamsLike = Union[Dict[str, Tensor], List[Tuple[str, Tensor]]]


class GradCheckError(ValueError):
    """Perda não finita em um ponto perturbado."""


@dataclass
class GradReport:
    """
    Comparação analítico x numérico para uma coordenada de um parâmetro.
    """
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float

    def passed(self, tol: float = GRADCHECK_PARAMS["tol"], atol: float = GRADCHECK_PARAMS["atol"]) -> bool:
        return self.rel_error <= tol or abs(self.analytic - self.numeric) <= atol


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))


def _evaluate(loss_fn: Callable[[], Tensor], nome: str) -> float:
    try:
        valor = loss_fn().item()
    except NumericalError as e:
        raise GradCheckError(f"perda não finita ao perturbar {nome}: {e}") from e
    if not np.isfinite(valor):
        raise GradCheckError(f"perda não finita ao perturbar {nome}")
    return valor


def finite_diff_check(loss_fn: Callable[[], Tensor], params: ParamsLike,
                      step: float = GRADCHECK_PARAMS["step"],
                      samples: int = GRADCHECK_PARAMS["samples"],
                      rng: Optional[np.random.Generator] = None) -> List[GradReport]:
    """
    Compara gradientes analíticos com diferenças finitas centrais.

    Args:
        loss_fn: Função sem argumentos que devolve a perda escalar, determinística
            dados os parâmetros.
        params: Parâmetros verificados (dict nome -> Tensor ou lista de pares).
        step: Passo h das diferenças (L(p + h) - L(p - h)) / 2h.
        samples: Coordenadas sorteadas por tensor (todas, se houver menos).
        rng: Gerador para o sorteio das coordenadas.

    Returns:
        List[GradReport]: Um relatório por coordenada verificada.

    Raises:
        GradCheckError: Perda não finita em algum ponto perturbado.
    """
    pares = list(params.items()) if isinstance(params, dict) else list(params)
    rng = rng if rng is not None else np.random.default_rng(0)

    # Gradientes analíticos
    tensores = [p for _, p in pares]
    zero_grads(tensores)
    loss_fn().backward()
    analiticos = {nome: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for nome, p in pares}
    zero_grads(tensores)

    relatorios = []
    for nome, p in pares:
        if p.size <= samples:
            coordenadas = np.arange(p.size)
        else:
            coordenadas = np.sort(rng.choice(p.size, size=samples, replace=False))
        p.data = np.ascontiguousarray(p.data)
        plano = p.data.reshape(-1)
        for i in coordenadas:
            original = plano[i]
            plano[i] = original + step
            mais = _evaluate(loss_fn, nome)
            plano[i] = original - step
            menos = _evaluate(loss_fn, nome)
            plano[i] = original
            numerico = (mais - menos) / (2.0 * step)
            analitico = float(analiticos[nome].reshape(-1)[i])
            relatorios.append(GradReport(nome, int(i), analitico, numerico, relative_error(analitico, numerico)))
    return relatorios


def pass_fraction(reports: List[GradReport]) -> float:
    if not reports:
        return 1.0
    return sum(r.passed() for r in reports) / len(reports)


def suite_passed(reports: List[GradReport], min_fraction: float = GRADCHECK_PARAMS["min_fraction"]) -> bool:
    return pass_fraction(reports) >= min_fraction


# ----------------------------------------------------------------------
# Suítes por perda
# ----------------------------------------------------------------------

@dataclass
class _Fixture:
    config: TrainConfig
    gen: GeneratorNet
    disc: DiscriminatorNet
    real: np.ndarray
    rng: np.random.Generator


def _fixture(seed: int) -> _Fixture:
    config = TrainConfig(latent_dim=8, image_size=16, seed=seed)
    rng = np.random.default_rng(seed)
    gen = init_generator(config.latent_dim, config.image_size, rng)
    disc = init_discriminator(config.image_size, rng)
    real = np.tanh(rng.standard_normal((config.batch_size, 1, 16, 16)))
    return _Fixture(config, gen, disc, real, rng)


def _lg_loss(fx: _Fixture) -> Callable[[], Tensor]:
    # Pseudo-fonte congelado antes das perturbações
    omega = sample_dirichlet(fx.config.batch_size, fx.config.dirichlet_alpha, fx.rng)
    pseudo = pseudo_source_features(discriminator_forward(fx.disc, fx.real).features, omega)
    z = fx.rng.standard_normal((fx.config.batch_size, fx.gen.latent_dim))
    z_bar = anchor_latent(z, omega)
    ancora = generator_forward(fx.gen, z_bar[None, :])[0].detach()

    def loss() -> Tensor:
        saida = discriminator_forward(fx.disc, ancora, source="generated")
        return geodesic_scc_loss(pseudo, target_features(saida.features, z_bar))
    return loss


def _interp_latents(fx: _Fixture) -> np.ndarray:
    d = fx.gen.latent_dim
    return interpolation_set(InterpolationSpec(fx.rng.standard_normal(d), fx.rng.standard_normal(d),
                                               fx.config.interp_size))


def _suite_lg(fx: _Fixture) -> Dict[str, Tuple[Callable[[], Tensor], Dict[str, Tensor]]]:
    return {"lg": (_lg_loss(fx), fx.disc.params)}


def _suite_ldr(fx: _Fixture):
    z_inp = _interp_latents(fx)
    return {"ldr": (lambda: distance_regularization(generator_forward(fx.gen, z_inp)[1], fx.config.interp_size),
                    fx.gen.params)}


def _suite_linp(fx: _Fixture):
    interp = generator_forward(fx.gen, _interp_latents(fx))[0].detach()
    return {"linp": (lambda: interpolation_loss(discriminator_forward(fx.disc, interp).probs), fx.disc.params)}


def _suite_adv(fx: _Fixture):
    z = fx.rng.standard_normal((fx.config.batch_size, fx.gen.latent_dim))
    fake = generator_forward(fx.gen, z)[0].detach()

    def adv_d() -> Tensor:
        return discriminator_adversarial_loss(discriminator_forward(fx.disc, fx.real).probs,
                                              discriminator_forward(fx.disc, fake).probs)

    def adv_g() -> Tensor:
        return generator_adversarial_loss(discriminator_forward(fx.disc, generator_forward(fx.gen, z)[0]).probs)

    return {"adv_d": (adv_d, fx.disc.params), "adv_g": (adv_g, fx.gen.params)}


def _suite_objectives(fx: _Fixture):
    lambdas = Lambdas.from_config(fx.config)
    z = fx.rng.standard_normal((fx.config.batch_size, fx.gen.latent_dim))
    z_inp = _interp_latents(fx)
    fake = generator_forward(fx.gen, z)[0].detach()
    interp = generator_forward(fx.gen, z_inp)[0].detach()
    lg = _lg_loss(fx)

    def total_d() -> Tensor:
        l_adv_d = discriminator_adversarial_loss(discriminator_forward(fx.disc, fx.real).probs,
                                                 discriminator_forward(fx.disc, fake).probs)
        l_inp = interpolation_loss(discriminator_forward(fx.disc, interp).probs)
        return discriminator_objective(l_adv_d, l_inp, lg(), lambdas)

    def total_g() -> Tensor:
        l_adv_g = generator_adversarial_loss(discriminator_forward(fx.disc, generator_forward(fx.gen, z)[0]).probs)
        imagens, features = generator_forward(fx.gen, z_inp)
        l_inp = interpolation_loss(discriminator_forward(fx.disc, imagens).probs)
        return generator_objective(l_adv_g, l_inp, distance_regularization(features), lambdas)

    return {"total_d": (total_d, fx.disc.params), "total_g": (total_g, fx.gen.params)}


SUITES = {
    "lg": _suite_lg,
    "ldr": _suite_ldr,
    "linp": _suite_linp,
    "adv": _suite_adv,
    "objectives": _suite_objectives,
}


def run_gradcheck(target: str = "all", seed: int = 0,
                  samples: int = GRADCHECK_PARAMS["samples"]) -> Dict[str, List[GradReport]]:
    """
    Executa as suítes de verificação de gradientes.

    Args:
        target: "lg", "ldr", "linp", "adv", "objectives" ou "all".
        seed: Semente das redes, entradas e coordenadas sorteadas.
        samples: Coordenadas sorteadas por tensor de parâmetros.

    Returns:
        Dict[str, List[GradReport]]: Relatórios por perda verificada.
    """
    alvos = GRADCHECK_TARGETS if target == "all" else (target,)
    if any(a not in SUITES for a in alvos):
        raise GradCheckError(f"alvo desconhecido: {target}")

    resultados = {}
    for alvo in alvos:
        fx = _fixture(seed)
        for nome, (loss_fn, params) in SUITES[alvo](fx).items():
            relatorios = finite_diff_check(loss_fn, params, samples=samples, rng=np.random.default_rng(seed))
            resultados[nome] = relatorios
            logger.info("Gradcheck %s: %d coordenadas, %.1f%% dentro da tolerância",
                        nome, len(relatorios), 100.0 * pass_fraction(relatorios))
    return resultados


def reports_table(results: Dict[str, List[GradReport]]) -> pd.DataFrame:
    """
    Resume os relatórios por perda e parâmetro.

    Returns:
        pd.DataFrame: Colunas loss, parameter, coords, max_rel_error,
        pass_fraction e passed.
    """
    linhas = []
    for perda, relatorios in results.items():
        df = pd.DataFrame([vars(r) for r in relatorios])
        df["ok"] = [r.passed() for r in relatorios]
        for parametro, grupo in df.groupby("name", sort=False):
            linhas.append({
                "loss": perda,
                "parameter": parametro,
                "coords": len(grupo),
                "max_rel_error": grupo["rel_error"].max(),
                "pass_fraction": grupo["ok"].mean(),
            })
    tabela = pd.DataFrame(linhas, columns=["loss", "parameter", "coords", "max_rel_error", "pass_fraction"])
    tabela["passed"] = tabela["loss"].map({p: suite_passed(r) for p, r in results.items()})
    return tabela
