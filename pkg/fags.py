"""
Módulo de aumento de features na superfície geodésica (FAGS).

Este módulo contém a amostragem dos pesos de Dirichlet, a latente âncora, a
construção do domínio pseudo-fonte a partir das features reais, as features
alvo projetadas, as matrizes de autocorrelação e a perda de consistência L_g.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import GEOMETRY_PARAMS, TRAIN_PARAMS
from preshape import (
    GeometryError,
    WeightVector,
    geodesic_surface_point,
    project_preshape,
    restore_layout,
)
from tensor import Tensor, as_tensor, l2_norm, smooth_l1
from tensor_io import GSL1_SUFFIX, read_tensor_dir, write_tensor

logger = logging.getLogger(__name__)

FeatureLike = Union[Tensor, np.ndarray]

SOURCE_TAGS = ("real", "generated")


class AugmentationError(ValueError):
    """Erro na construção do domínio pseudo-fonte ou no cálculo de L_g."""


@dataclass
class FeatureStack:
    """
    Features por camada D^l(x), na ordem crescente de camada.

    Cada mapa tem forma c x h x w (uma amostra) ou N x c x h x w (lote).
    """
    layers: List[Tuple[int, FeatureLike]]
    source: str = "real"

    def __post_init__(self):
        if self.source not in SOURCE_TAGS:
            raise AugmentationError(f"origem de features desconhecida: {self.source}")
        ids = [layer_id for layer_id, _ in self.layers]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise AugmentationError(f"ids de camada devem ser estritamente crescentes: {ids}")

    @property
    def layer_ids(self) -> List[int]:
        return [layer_id for layer_id, _ in self.layers]

    def layer(self, layer_id: int) -> FeatureLike:
        for atual, mapa in self.layers:
            if atual == layer_id:
                return mapa
        raise AugmentationError(f"camada {layer_id} ausente (disponíveis {self.layer_ids})")

    def split(self) -> List["FeatureStack"]:
        """
        Separa um lote N x c x h x w em N pilhas de uma amostra (arrays numpy).
        """
        if not self.layers:
            return []
        mapas = [(l, np.asarray(as_tensor(f).data)) for l, f in self.layers]
        if any(m.ndim != 4 for _, m in mapas):
            return [FeatureStack([(l, m.copy()) for l, m in mapas], source=self.source)]
        n = mapas[0][1].shape[0]
        return [FeatureStack([(l, m[i].copy()) for l, m in mapas], source=self.source) for i in range(n)]


@dataclass
class PseudoSourceBatch:
    """
    Pre-shapes x^l de cada camada, de volta à forma c x h x w, e os pesos usados.
    """
    layers: List[Tuple[int, np.ndarray]]
    omega: WeightVector


@dataclass
class TargetFeatureBatch:
    """
    Features alvo z^l = f_p(D^l(G(z_barra))) na forma c x h x w (diferenciáveis).
    """
    layers: List[Tuple[int, Tensor]]
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SelfCorrMatrix:
    """
    Similaridades de cosseno entre todas as posições espaciais de um mapa.
    """
    values: Tensor
    h: int
    w: int
    degenerate: bool = False


# ----------------------------------------------------------------------
# Pesos e latente âncora
# ----------------------------------------------------------------------

def sample_dirichlet(n: int, alpha: float = TRAIN_PARAMS["dirichlet_alpha"],
                     rng: Optional[np.random.Generator] = None) -> WeightVector:
    """
    Amostra pesos omega ~ Dir(alpha, ..., alpha).

    Args:
        n: Número de entradas baricêntricas.
        alpha: Concentração (1.0 = uniforme no simplex).
        rng: Gerador numpy semeado.

    Returns:
        WeightVector: Pesos não negativos de soma 1.
    """
    if n < 1:
        raise AugmentationError(f"n deve ser >= 1 (recebido {n})")
    if alpha <= 0:
        raise AugmentationError(f"alpha deve ser > 0 (recebido {alpha})")
    if n == 1:
        return WeightVector(np.ones(1))
    rng = rng if rng is not None else np.random.default_rng()
    pesos = rng.dirichlet(np.full(n, float(alpha)))
    return WeightVector(pesos / pesos.sum())


def sample_source_weights(n: int, alpha: float, source: str, rng: np.random.Generator) -> WeightVector:
    """
    Pesos do domínio pseudo-fonte conforme a variante de origem.

    "surface" amostra da Dirichlet; "direct" escolhe uma amostra real
    uniformemente (peso one-hot), usando-a diretamente como fonte.
    """
    if source == "surface":
        return sample_dirichlet(n, alpha, rng)
    if source == "direct":
        return WeightVector.one_hot(n, int(rng.integers(n)))
    raise AugmentationError(f"variante de fonte desconhecida: {source}")


def anchor_latent(latents: np.ndarray, omega: Union[WeightVector, np.ndarray]) -> np.ndarray:
    """
    Latente âncora z_barra = sum_i omega_i z_i.

    Args:
        latents: Matriz n x d com as latentes z_i.
        omega: Os mesmos pesos usados no domínio pseudo-fonte.

    Returns:
        np.ndarray: Vetor de dimensão d.
    """
    pesos = omega.weights if isinstance(omega, WeightVector) else WeightVector(omega).weights
    latentes = np.asarray(latents, dtype=np.float64)
    if latentes.ndim != 2 or latentes.shape[0] != pesos.size:
        raise AugmentationError(
            f"número de latentes {latentes.shape[0] if latentes.ndim else 0} difere de {pesos.size} pesos"
        )
    return (pesos / pesos.sum()) @ latentes


# ----------------------------------------------------------------------
# Domínio pseudo-fonte e alvo
# ----------------------------------------------------------------------

def pseudo_source_features(real_features: Union[FeatureStack, Sequence[FeatureStack]],
                           omega: WeightVector) -> PseudoSourceBatch:
    """
    Constrói as features pseudo-fonte x^l na superfície geodésica.

    Para cada camada: projeta D^l(x_i) de cada amostra, calcula G_surf com
    omega e devolve o resultado na forma c x h x w. As features reais são
    tratadas como constantes.

    Args:
        real_features: n pilhas de uma amostra, ou uma pilha em lote de n.
        omega: Pesos baricêntricos (os mesmos da latente âncora).

    Returns:
        PseudoSourceBatch: Features pseudo-fonte por camada.
    """
    pilhas = real_features.split() if isinstance(real_features, FeatureStack) else list(real_features)
    if len(pilhas) != omega.n:
        raise AugmentationError(f"{len(pilhas)} pilhas de features para {omega.n} pesos")

    ids = pilhas[0].layer_ids
    camadas = []
    for layer_id in ids:
        mapas = [np.asarray(as_tensor(p.layer(layer_id)).data) for p in pilhas]
        forma = mapas[0].shape
        if any(m.shape != forma for m in mapas):
            raise AugmentationError(f"camada {layer_id}: formas diferentes entre amostras")
        try:
            taus = [project_preshape(m, layer_id=layer_id) for m in mapas]
            barycentro = geodesic_surface_point(taus, omega)
        except GeometryError as e:
            raise AugmentationError(f"{e} (camada {layer_id})") from e
        camadas.append((layer_id, restore_layout(barycentro, forma)))
    return PseudoSourceBatch(layers=camadas, omega=omega)


def project_preshape_tensor(feature: Tensor, layer_id: Optional[int] = None) -> Tensor:
    """
    Versão diferenciável de f_p: reshape 2 x m, centraliza, normaliza e volta
    à forma original.
    """
    feature = as_tensor(feature)
    if feature.size % 2:
        raise AugmentationError(f"odd feature volume ({feature.size} valores, camada {layer_id})")
    matriz = feature.reshape(2, feature.size // 2)
    centrada = matriz - matriz.mean(axis=1, keepdims=True)
    norma = l2_norm(centrada)
    if norma.item() ** 2 <= GEOMETRY_PARAMS["eps_degenerado"]:
        raise AugmentationError(f"degenerate feature (camada {layer_id})")
    return (centrada / norma).reshape(feature.shape)


def target_features(generated: FeatureStack, anchor: np.ndarray) -> TargetFeatureBatch:
    """
    Projeta as features de D(G(z_barra)) camada a camada.

    Args:
        generated: Pilha das features da imagem gerada (lote de 1 ou c x h x w).
        anchor: Latente âncora usada para gerar a imagem.

    Returns:
        TargetFeatureBatch: Features alvo diferenciáveis nos parâmetros de D.
    """
    camadas = []
    for layer_id, mapa in generated.layers:
        mapa = as_tensor(mapa)
        if mapa.ndim == 4:
            if mapa.shape[0] != 1:
                raise AugmentationError(f"features alvo esperam lote 1 (recebido {mapa.shape[0]})")
            mapa = mapa.reshape(mapa.shape[1:])
        camadas.append((layer_id, project_preshape_tensor(mapa, layer_id)))
    return TargetFeatureBatch(layers=camadas, anchor=np.asarray(anchor, dtype=np.float64))


# ----------------------------------------------------------------------
# Autocorrelação e perdas
# ----------------------------------------------------------------------

def self_correlation(feature: FeatureLike) -> SelfCorrMatrix:
    """
    Matriz (hw) x (hw) de similaridades de cosseno entre posições espaciais.

    Posições com vetor nulo recebem similaridade 0 e marcam a matriz como
    degenerada.

    Args:
        feature: Mapa c x h x w.

    Returns:
        SelfCorrMatrix: Matriz de autocorrelação.
    """
    feature = as_tensor(feature)
    if feature.ndim != 3:
        raise AugmentationError(f"autocorrelação espera um mapa c x h x w (recebido {feature.shape})")
    c, h, w = feature.shape
    vetores = feature.reshape(c, h * w)
    normas = l2_norm(vetores, axis=0)

    nulos = normas.data ** 2 <= GEOMETRY_PARAMS["eps_degenerado"]
    degenerada = bool(np.any(nulos))
    if degenerada:
        logger.warning("Autocorrelação degenerada: %d posições com vetor nulo", int(nulos.sum()))
        vetores = vetores * (~nulos).astype(np.float64)
        normas = normas + nulos.astype(np.float64)

    unitarios = vetores / normas
    return SelfCorrMatrix(values=unitarios.transpose() @ unitarios, h=h, w=w, degenerate=degenerada)


def _paired_layers(pseudo, target) -> List[Tuple[int, FeatureLike, FeatureLike]]:
    ids_a = [l for l, _ in pseudo.layers]
    ids_b = [l for l, _ in target.layers]
    if ids_a != ids_b:
        raise AugmentationError(f"layer mismatch: {ids_a} e {ids_b}")
    if not ids_a:
        raise AugmentationError("nenhuma camada selecionada")
    pares = []
    for (layer_id, a), (_, b) in zip(pseudo.layers, target.layers):
        forma_a, forma_b = as_tensor(a).shape, as_tensor(b).shape
        if forma_a != forma_b:
            raise AugmentationError(f"layer mismatch na camada {layer_id}: {forma_a} e {forma_b}")
        pares.append((layer_id, a, b))
    return pares


def geodesic_scc_loss(pseudo, target) -> Tensor:
    """
    Perda de consistência de autocorrelação geodésica L_g.

    Média sobre as camadas da média elemento a elemento do smooth-l1 entre as
    matrizes de autocorrelação das features pseudo-fonte e alvo.

    Args:
        pseudo: Objeto com .layers (PseudoSourceBatch ou equivalente).
        target: Objeto com .layers (TargetFeatureBatch ou equivalente).

    Returns:
        Tensor: Escalar não negativo.
    """
    termos = []
    for _, a, b in _paired_layers(pseudo, target):
        diferenca = self_correlation(b).values - self_correlation(a).values
        termos.append(smooth_l1(diferenca).mean())
    total = termos[0]
    for termo in termos[1:]:
        total = total + termo
    return total / float(len(termos))


def preshape_feature_loss(pseudo, target) -> Tensor:
    """
    Variante de L_g com smooth-l1 direto entre as features pré-shape.
    """
    termos = [smooth_l1(as_tensor(b) - as_tensor(a)).mean() for _, a, b in _paired_layers(pseudo, target)]
    total = termos[0]
    for termo in termos[1:]:
        total = total + termo
    return total / float(len(termos))


FAGS_LOSS_FUNCTIONS = {
    "scc": geodesic_scc_loss,
    "smooth_l1": preshape_feature_loss,
}


# ----------------------------------------------------------------------
# Aumento de features em disco (subcomando augment)
# ----------------------------------------------------------------------

def augment_directory(features_dir: Union[str, Path], n: int, alpha: float, seed: int,
                      out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Gera n amostras pseudo-fonte a partir de tensores GSL1 de features reais.

    Cada arquivo .gsl1 do diretório é uma camada, com forma N x c x h x w
    (N amostras reais); a ordem dos nomes define a ordem das camadas. Para
    cada amostra gerada é sorteado um novo omega.

    Args:
        features_dir: Diretório com os tensores de entrada.
        n: Número de amostras pseudo-fonte a gerar.
        alpha: Concentração da Dirichlet.
        seed: Semente do gerador.
        out_dir: Diretório de saída.

    Returns:
        Dict[str, Path]: Arquivos escritos, por nome de camada (mais "omega").
    """
    tensores = read_tensor_dir(features_dir)
    if not tensores:
        raise AugmentationError(f"nenhum tensor {GSL1_SUFFIX} em {features_dir}")
    if n < 1:
        raise AugmentationError(f"n deve ser >= 1 (recebido {n})")

    nomes = list(tensores)
    lotes = [tensores[nome] for nome in nomes]
    if any(lote.ndim != 4 for lote in lotes):
        raise AugmentationError("tensores de features devem ter forma N x c x h x w")
    amostras = lotes[0].shape[0]
    if any(lote.shape[0] != amostras for lote in lotes):
        raise AugmentationError("todas as camadas devem ter o mesmo número de amostras")

    real = FeatureStack(list(enumerate(lotes)), source="real")
    rng = np.random.default_rng(seed)
    saidas = {nome: [] for nome in nomes}
    pesos = []
    for _ in range(n):
        omega = sample_dirichlet(amostras, alpha, rng)
        batch = pseudo_source_features(real, omega)
        for (_, mapa), nome in zip(batch.layers, nomes):
            saidas[nome].append(mapa)
        pesos.append(omega.weights)

    out_dir = Path(out_dir)
    escritos = {nome: write_tensor(out_dir / f"{nome}{GSL1_SUFFIX}", np.stack(mapas)) for nome, mapas in saidas.items()}
    escritos["omega"] = write_tensor(out_dir / f"omega{GSL1_SUFFIX}", np.stack(pesos))
    logger.info("Pseudo-fonte com %d amostras escrito em %s", n, out_dir)
    return escritos
