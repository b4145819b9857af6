"""
Módulo das perdas de interpolação e regularização de distância (I&R).

Este módulo contém o conjunto de latentes interpoladas, a supervisão de
interpolação L_inp, a regularização de distância L_dr, as perdas adversariais
e os objetivos finais do gerador e do discriminador.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from config import TRAIN_PARAMS, TrainConfig
from tensor import (
    Tensor,
    adaptive_avg_pool2d,
    as_tensor,
    concatenate,
    l2_norm,
    log_one_minus_prob,
    log_prob,
    log_softmax,
    stack,
)

logger = logging.getLogger(__name__)

Scalar = Union[Tensor, float]


class LossError(ValueError):
    """Entrada inválida ou componente não finito nas perdas I&R."""


class Lambdas(NamedTuple):
    """Pesos fixos dos objetivos: lambda1 (L_inp), lambda2 (L_dr), lambda3 (L_g)."""
    lambda1: float = TRAIN_PARAMS["lambda1"]
    lambda2: float = TRAIN_PARAMS["lambda2"]
    lambda3: float = TRAIN_PARAMS["lambda3"]

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Lambdas":
        return cls(config.lambda1, config.lambda2, config.lambda3)


@dataclass(frozen=True, eq=False)
class InterpolationSpec:
    """
    Extremos z'_1 e z'_k da interpolação linear e o número k de latentes.
    """
    z_start: np.ndarray
    z_end: np.ndarray
    k: int = TRAIN_PARAMS["interp_size"]

    def __post_init__(self):
        if self.k < 2:
            raise LossError(f"k deve ser >= 2 (recebido {self.k})")
        inicio = np.asarray(self.z_start, dtype=np.float64).reshape(-1)
        fim = np.asarray(self.z_end, dtype=np.float64).reshape(-1)
        if inicio.shape != fim.shape:
            raise LossError(f"extremos com dimensões diferentes: {inicio.shape} e {fim.shape}")
        object.__setattr__(self, "z_start", inicio)
        object.__setattr__(self, "z_end", fim)


@dataclass
class LossReport:
    """
    Componentes das perdas de um passo e os totais L^G e L^D.
    """
    l_adv_g: float
    l_adv_d: float
    l_inp: float
    l_dr: float
    l_g: float
    total_g: float
    total_d: float
    lambdas: Lambdas = field(default_factory=Lambdas)

    def as_row(self, step: int) -> Dict[str, float]:
        return {
            "step": step,
            "l_adv_g": self.l_adv_g,
            "l_adv_d": self.l_adv_d,
            "l_inp": self.l_inp,
            "l_dr": self.l_dr,
            "l_g": self.l_g,
            "total_g": self.total_g,
            "total_d": self.total_d,
        }


# ----------------------------------------------------------------------
# Interpolação (L_inp)
# ----------------------------------------------------------------------

def interpolation_set(spec: InterpolationSpec) -> np.ndarray:
    """
    Latentes igualmente espaçadas entre z_start e z_end.

    Args:
        spec: Extremos e número k de latentes.

    Returns:
        np.ndarray: Matriz k x d; a primeira linha é z_start e a última z_end.
    """
    t = np.arange(spec.k, dtype=np.float64) / (spec.k - 1)
    latentes = spec.z_start[None, :] + t[:, None] * (spec.z_end - spec.z_start)[None, :]
    latentes[0] = spec.z_start
    latentes[-1] = spec.z_end
    return latentes


def interpolation_loss(disc_outputs: Union[Tensor, np.ndarray]) -> Tensor:
    """
    L_inp = média de log D(G(Z_inp)) sobre as k interpolações.

    Args:
        disc_outputs: Probabilidades do discriminador nas k imagens interpoladas.

    Returns:
        Tensor: Escalar (probabilidades restritas a [eps, 1 - eps]).
    """
    return log_prob(disc_outputs).mean()


# ----------------------------------------------------------------------
# Regularização de distância (L_dr)
# ----------------------------------------------------------------------

def pooled_size(h: int, w: int) -> Tuple[int, int]:
    """Tamanho espacial após a redução para 1/4 (teto, mínimo 1)."""
    return max(1, math.ceil(h / 4)), max(1, math.ceil(w / 4))


def pool_features(features: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Média adaptativa de um lote k x c x h x w para k x c x ceil(h/4) x ceil(w/4).
    """
    features = as_tensor(features)
    if features.ndim != 4:
        raise LossError(f"features devem ter forma k x c x h x w (recebido {features.shape})")
    return adaptive_avg_pool2d(features, pooled_size(*features.shape[2:]))


def cyclic_distances(features: Union[Tensor, np.ndarray, Sequence[Tensor]]) -> Tensor:
    """
    Distâncias L2 consecutivas cíclicas dist_i = ||f_i - f_{(i+1) mod k}|| das
    features reduzidas.
    """
    if isinstance(features, (list, tuple)):
        features = stack(features, axis=0)
    achatadas = pool_features(features)
    k = achatadas.shape[0]
    if k < 2:
        raise LossError(f"k deve ser >= 2 (recebido {k})")
    achatadas = achatadas.reshape(k, -1)
    deslocadas = concatenate([achatadas[1:], achatadas[0:1]], axis=0)
    return l2_norm(achatadas - deslocadas, axis=1)


def dr_target(k: int) -> np.ndarray:
    """
    Alvo q = normalize([1, ..., 1, k - 1]) com k - 1 uns.
    """
    if k < 2:
        raise LossError(f"k deve ser >= 2 (recebido {k})")
    contagens = np.concatenate([np.ones(k - 1), [float(k - 1)]])
    return contagens / contagens.sum()


def distance_kl(dist: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Divergência KL média entre q e softmax(dist), com entrada em log-probabilidade:
    média_i q_i (log q_i - log_softmax(dist)_i).
    """
    dist = as_tensor(dist)
    q = dr_target(dist.shape[0])
    return (q * (np.log(q) - log_softmax(dist))).mean()


def distance_regularization(interp_features: Union[Tensor, np.ndarray, Sequence[Tensor]],
                            k: Optional[int] = None) -> Tensor:
    """
    Regularização de distância L_dr sobre as features das k interpolações.

    Args:
        interp_features: Lote k x c x h x w (ou lista de k mapas c x h x w).
        k: Número de interpolações (conferido contra o lote, se informado).

    Returns:
        Tensor: Escalar não negativo.
    """
    dist = cyclic_distances(interp_features)
    if k is not None and dist.shape[0] != k:
        raise LossError(f"esperadas {k} features, recebidas {dist.shape[0]}")
    return distance_kl(dist)


# ----------------------------------------------------------------------
# Perdas adversariais e objetivos
# ----------------------------------------------------------------------

def generator_adversarial_loss(fake_probs: Union[Tensor, np.ndarray]) -> Tensor:
    """L^G_adv = -E[log D(G(z))]."""
    return -log_prob(fake_probs).mean()


def discriminator_adversarial_loss(real_probs: Union[Tensor, np.ndarray],
                                   fake_probs: Union[Tensor, np.ndarray]) -> Tensor:
    """L^D_adv = E[log(1 - D(x))] + E[log D(G(z))]."""
    return log_one_minus_prob(real_probs).mean() + log_prob(fake_probs).mean()


def adversarial_losses(real_probs, fake_probs) -> Tuple[Tensor, Tensor]:
    """
    Perdas adversariais do gerador e do discriminador.

    Args:
        real_probs: D(x) nas imagens reais.
        fake_probs: D(G(z)) nas imagens geradas.

    Returns:
        Tuple[Tensor, Tensor]: (l_adv_g, l_adv_d).
    """
    return generator_adversarial_loss(fake_probs), discriminator_adversarial_loss(real_probs, fake_probs)


def generator_objective(l_adv_g: Scalar, l_inp: Scalar, l_dr: Scalar, lambdas: Lambdas) -> Scalar:
    """L^G = L^G_adv - lambda1 L_inp + lambda2 L_dr."""
    return l_adv_g - lambdas.lambda1 * l_inp + lambdas.lambda2 * l_dr


def discriminator_objective(l_adv_d: Scalar, l_inp: Scalar, l_g: Scalar, lambdas: Lambdas) -> Scalar:
    """L^D = L^D_adv + lambda1 L_inp + lambda3 L_g."""
    return l_adv_d + lambdas.lambda1 * l_inp + lambdas.lambda3 * l_g


def _as_float(nome: str, valor: Scalar) -> float:
    numero = valor.item() if isinstance(valor, Tensor) else float(valor)
    if not math.isfinite(numero):
        raise LossError(f"componente não finito: {nome} = {numero}")
    return numero


def total_objectives(l_adv_g: Scalar, l_adv_d: Scalar, l_inp: Scalar = 0.0, l_dr: Scalar = 0.0,
                     l_g: Scalar = 0.0, lambdas: Lambdas = Lambdas()) -> LossReport:
    """
    Monta o LossReport com os dois objetivos totais.

    L_dr entra apenas em L^G, L_g apenas em L^D e L_inp em ambos, com sinais
    opostos.

    Args:
        l_adv_g, l_adv_d, l_inp, l_dr, l_g: Componentes escalares.
        lambdas: Pesos lambda1, lambda2, lambda3.

    Returns:
        LossReport: Componentes e totais em float.

    Raises:
        LossError: Se algum componente não for finito (nomeado na mensagem).
    """
    partes = {
        "l_adv_g": _as_float("l_adv_g", l_adv_g),
        "l_adv_d": _as_float("l_adv_d", l_adv_d),
        "l_inp": _as_float("l_inp", l_inp),
        "l_dr": _as_float("l_dr", l_dr),
        "l_g": _as_float("l_g", l_g),
    }
    total_g = generator_objective(partes["l_adv_g"], partes["l_inp"], partes["l_dr"], lambdas)
    total_d = discriminator_objective(partes["l_adv_d"], partes["l_inp"], partes["l_g"], lambdas)
    return LossReport(total_g=total_g, total_d=total_d, lambdas=lambdas, **partes)
