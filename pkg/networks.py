"""
Módulo das redes de brinquedo do gerador e do discriminador.

O gerador projeta a latente para 32 x 4 x 4 e dobra a resolução a cada
estágio (upsample + conv 3x3) até o tamanho da imagem; o discriminador reduz a
imagem com convoluções de stride 2 até 16 x 4 x 4, seguido de uma camada densa
e da sigmoide. As duas expõem features intermediárias.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import NETWORK_PARAMS, NUMERIC_PARAMS, TrainConfig
from fags import FeatureStack
from tensor import Tensor, as_tensor, clamp_probability, conv2d, leaky_relu, parameter, upsample_nearest

logger = logging.getLogger(__name__)


class NetworkError(ValueError):
    """Entrada incompatível com a arquitetura da rede."""


@dataclass
class GeneratorNet:
    """
    Gerador: latente d -> imagem 1 x S x S em [-1, 1].
    """
    latent_dim: int
    image_size: int
    params: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def n_stages(self) -> int:
        return int(math.log2(self.image_size // NETWORK_PARAMS["base_resolution"]))


@dataclass
class DiscriminatorNet:
    """
    Discriminador: imagem 1 x S x S -> probabilidade e features por camada.
    """
    image_size: int
    tap_layers: Tuple[int, ...] = ()
    params: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def n_convs(self) -> int:
        return int(math.log2(self.image_size // NETWORK_PARAMS["base_resolution"]))

    @property
    def taps(self) -> Tuple[int, ...]:
        """Camadas selecionadas (padrão: as duas últimas convoluções)."""
        if self.tap_layers:
            return tuple(self.tap_layers)
        return tuple(range(max(1, self.n_convs - 1), self.n_convs + 1))


class DiscriminatorOutput(NamedTuple):
    probs: Tensor
    features: FeatureStack
    embedding: Tensor


def _he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


def _check_image_size(image_size: int) -> None:
    base = NETWORK_PARAMS["base_resolution"]
    if image_size < 2 * base or image_size & (image_size - 1):
        raise NetworkError(f"image_size deve ser potência de 2 >= {2 * base} (recebido {image_size})")


def generator_channels(n_stages: int) -> List[int]:
    """Canais de saída da projeção e de cada estágio (32 -> 16 -> 8, mínimo 8)."""
    canais = [NETWORK_PARAMS["gen_base_channels"]]
    for _ in range(n_stages):
        canais.append(max(NETWORK_PARAMS["gen_min_channels"], canais[-1] // 2))
    return canais


def discriminator_channels(n_convs: int) -> List[int]:
    """Canais de cada convolução (8 -> 16, depois constante)."""
    canais = [NETWORK_PARAMS["disc_base_channels"]]
    while len(canais) < n_convs:
        canais.append(min(2 * canais[-1], 2 * NETWORK_PARAMS["disc_base_channels"]))
    return canais


def init_generator(latent_dim: int, image_size: int, rng: np.random.Generator) -> GeneratorNet:
    """
    Inicializa o gerador com escala He (fan-in) e vieses nulos.

    Args:
        latent_dim: Dimensão d da latente.
        image_size: Lado S da imagem de saída.
        rng: Gerador numpy semeado.

    Returns:
        GeneratorNet: Rede com parâmetros rastreados.
    """
    _check_image_size(image_size)
    if latent_dim < 1:
        raise NetworkError(f"latent_dim deve ser >= 1 (recebido {latent_dim})")
    gen = GeneratorNet(latent_dim=latent_dim, image_size=image_size)
    k = NETWORK_PARAMS["kernel_size"]
    base = NETWORK_PARAMS["base_resolution"]
    canais = generator_channels(gen.n_stages)

    # Projeção densa para canais[0] x 4 x 4
    saida_fc = canais[0] * base * base
    gen.params["fc.weight"] = parameter(_he_normal(rng, (latent_dim, saida_fc), latent_dim), "fc.weight")
    gen.params["fc.bias"] = parameter(np.zeros(saida_fc), "fc.bias")

    for i in range(gen.n_stages):
        nome = f"stage{i + 1}"
        forma = (canais[i + 1], canais[i], k, k)
        gen.params[f"{nome}.weight"] = parameter(_he_normal(rng, forma, canais[i] * k * k), f"{nome}.weight")
        gen.params[f"{nome}.bias"] = parameter(np.zeros(canais[i + 1]), f"{nome}.bias")

    forma = (1, canais[-1], k, k)
    gen.params["out.weight"] = parameter(_he_normal(rng, forma, canais[-1] * k * k), "out.weight")
    gen.params["out.bias"] = parameter(np.zeros(1), "out.bias")
    return gen


def init_discriminator(image_size: int, rng: np.random.Generator,
                       tap_layers: Sequence[int] = ()) -> DiscriminatorNet:
    """
    Inicializa o discriminador com escala He (fan-in) e vieses nulos.

    Args:
        image_size: Lado S da imagem de entrada.
        rng: Gerador numpy semeado.
        tap_layers: Ids das convoluções expostas (1-based); vazio = duas últimas.

    Returns:
        DiscriminatorNet: Rede com parâmetros rastreados.
    """
    _check_image_size(image_size)
    disc = DiscriminatorNet(image_size=image_size, tap_layers=tuple(tap_layers))
    if any(l < 1 or l > disc.n_convs for l in disc.taps) or list(disc.taps) != sorted(set(disc.taps)):
        raise NetworkError(f"tap_layers inválidas {disc.taps} para {disc.n_convs} convoluções")
    k = NETWORK_PARAMS["kernel_size"]
    canais = [1] + discriminator_channels(disc.n_convs)

    for i in range(disc.n_convs):
        nome = f"conv{i + 1}"
        forma = (canais[i + 1], canais[i], k, k)
        disc.params[f"{nome}.weight"] = parameter(_he_normal(rng, forma, canais[i] * k * k), f"{nome}.weight")
        disc.params[f"{nome}.bias"] = parameter(np.zeros(canais[i + 1]), f"{nome}.bias")

    base = NETWORK_PARAMS["base_resolution"]
    entrada_fc = canais[-1] * base * base
    disc.params["fc.weight"] = parameter(_he_normal(rng, (entrada_fc, 1), entrada_fc), "fc.weight")
    disc.params["fc.bias"] = parameter(np.zeros(1), "fc.bias")
    return disc


def build_networks(config: TrainConfig, rng: np.random.Generator) -> Tuple[GeneratorNet, DiscriminatorNet]:
    gen = init_generator(config.latent_dim, config.image_size, rng)
    disc = init_discriminator(config.image_size, rng, config.tap_layers)
    return gen, disc


def generator_forward(gen: GeneratorNet, z) -> Tuple[Tensor, Tensor]:
    """
    Gera imagens a partir de um lote de latentes.

    Args:
        gen: Gerador.
        z: Lote de latentes (batch, d).

    Returns:
        Tuple[Tensor, Tensor]: Imagens (batch, 1, S, S) em [-1, 1] e as
        features do último estágio antes da camada de saída.
    """
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[1] != gen.latent_dim:
        raise NetworkError(f"wrong latent dim: esperado (batch, {gen.latent_dim}), recebido {z.shape}")
    p = gen.params
    base = NETWORK_PARAMS["base_resolution"]
    n = z.shape[0]

    x = z @ p["fc.weight"] + p["fc.bias"]
    x = leaky_relu(x.reshape(n, -1, base, base))
    for i in range(gen.n_stages):
        nome = f"stage{i + 1}"
        x = upsample_nearest(x, 2)
        x = leaky_relu(conv2d(x, p[f"{nome}.weight"], p[f"{nome}.bias"], stride=1, padding=1))
    features = x
    imagens = conv2d(features, p["out.weight"], p["out.bias"], stride=1, padding=1).tanh()
    return imagens, features


def discriminator_forward(disc: DiscriminatorNet, images, source: str = "real") -> DiscriminatorOutput:
    """
    Avalia o discriminador e extrai as features das camadas selecionadas.

    Args:
        disc: Discriminador.
        images: Lote (batch, 1, S, S).
        source: Origem das imagens ("real" ou "generated").

    Returns:
        DiscriminatorOutput: Probabilidades (batch,) em [eps, 1 - eps], a
        FeatureStack das camadas selecionadas e as features achatadas da
        última convolução (penúltima camada).
    """
    images = as_tensor(images)
    esperado = (1, disc.image_size, disc.image_size)
    if images.ndim != 4 or images.shape[1:] != esperado:
        raise NetworkError(f"imagens devem ter forma (batch, {esperado}), recebido {images.shape}")
    p = disc.params
    n = images.shape[0]

    x = images
    camadas = []
    for i in range(disc.n_convs):
        nome = f"conv{i + 1}"
        x = leaky_relu(conv2d(x, p[f"{nome}.weight"], p[f"{nome}.bias"], stride=2, padding=1))
        if i + 1 in disc.taps:
            camadas.append((i + 1, x))

    embedding = x.reshape(n, -1)
    logits = (embedding @ p["fc.weight"] + p["fc.bias"]).reshape(n)
    probs = clamp_probability(logits.sigmoid(), NUMERIC_PARAMS["prob_eps"])
    return DiscriminatorOutput(probs=probs, features=FeatureStack(camadas, source=source), embedding=embedding)
