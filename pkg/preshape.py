"""
Módulo de geometria do Pre-Shape Space.

Este módulo contém a projeção de mapas de features para pre-shapes (reshape,
centralização e normalização), a distância geodésica, o ponto sobre a curva
geodésica entre dois pre-shapes e o ponto sobre a superfície geodésica
construída por curvas iteradas com pesos baricêntricos.

Todas as funções são puras e operam sobre arranjos numpy float64.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import GEOMETRY_PARAMS

logger = logging.getLogger(__name__)


class GeometryError(ValueError):
    """Configuração inválida para a geometria do Pre-Shape Space."""


@dataclass(frozen=True, eq=False)
class PreShape:
    """
    Configuração 2 x m centralizada e de norma de Frobenius 1 (tau).
    """
    points: np.ndarray

    def __post_init__(self):
        pontos = np.asarray(self.points, dtype=np.float64)
        if pontos.ndim != 2 or pontos.shape[0] != 2 or pontos.shape[1] < 1:
            raise GeometryError(f"pre-shape deve ter forma 2 x m (recebido {pontos.shape})")
        medias = np.abs(pontos.mean(axis=1))
        if np.max(medias) > GEOMETRY_PARAMS["tol_centro"]:
            raise GeometryError(f"pre-shape não centralizado (médias {medias})")
        norma = np.linalg.norm(pontos)
        if abs(norma - 1.0) > GEOMETRY_PARAMS["tol_norma"]:
            raise GeometryError(f"pre-shape sem norma unitária (norma {norma!r})")
        object.__setattr__(self, "points", pontos)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def copy(self) -> "PreShape":
        return PreShape(self.points.copy())


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Pesos baricêntricos omega: n valores não negativos com soma positiva.
    """
    weights: np.ndarray

    def __post_init__(self):
        pesos = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if pesos.size < 1:
            raise GeometryError("vetor de pesos vazio")
        if not np.all(np.isfinite(pesos)) or np.any(pesos < 0):
            raise GeometryError(f"pesos devem ser finitos e não negativos: {pesos}")
        if pesos.sum() <= 0:
            raise GeometryError("a soma dos pesos deve ser positiva")
        object.__setattr__(self, "weights", pesos)

    @property
    def n(self) -> int:
        return self.weights.size

    @classmethod
    def one_hot(cls, n: int, index: int) -> "WeightVector":
        pesos = np.zeros(n)
        pesos[index] = 1.0
        return cls(pesos)


@dataclass(frozen=True, eq=False)
class GeodesicSpec:
    """
    Extremos tau_1 e tau_2 e o parâmetro de arco s (radianos, 0 <= s <= d).
    """
    tau_1: PreShape
    tau_2: PreShape
    s: float
    d: Optional[float] = None

    def __post_init__(self):
        if self.tau_1.points.shape != self.tau_2.points.shape:
            raise GeometryError(
                f"pre-shapes com formas diferentes: {self.tau_1.points.shape} e {self.tau_2.points.shape}"
            )
        if self.d is None:
            object.__setattr__(self, "d", geodesic_distance(self.tau_1, self.tau_2))
        if self.s < 0:
            raise GeometryError(f"parâmetro de arco negativo: {self.s}")


@dataclass(frozen=True, eq=False)
class SurfaceIterationState:
    """
    Estado da construção iterativa: baricentro corrente mu_j e soma dos pesos até j.
    """
    mu: PreShape
    j: int
    cumulative_weight: float


WeightsLike = Union[WeightVector, Sequence[float], np.ndarray]


def _as_weights(omega: WeightsLike) -> WeightVector:
    return omega if isinstance(omega, WeightVector) else WeightVector(np.asarray(omega))


# ----------------------------------------------------------------------
# Projeção f_p = V(Q(R(.)))
# ----------------------------------------------------------------------

def layout_matrix(feature: np.ndarray, layer_id: Optional[int] = None) -> np.ndarray:
    """
    Reorganiza um mapa c x h x w em uma matriz 2 x (chw/2).

    O mapa é achatado em ordem row-major; a primeira metade vira a linha 0 e a
    segunda metade a linha 1.

    Args:
        feature: Mapa de features de qualquer forma.
        layer_id: Camada de origem, usada nas mensagens de erro.

    Returns:
        np.ndarray: Matriz 2 x m.
    """
    plano = np.asarray(feature, dtype=np.float64).reshape(-1)
    if plano.size % 2:
        raise GeometryError(f"odd feature volume ({plano.size} valores{_camada(layer_id)})")
    return plano.reshape(2, -1)


def _camada(layer_id: Optional[int]) -> str:
    return "" if layer_id is None else f", camada {layer_id}"


def project_preshape(feature: np.ndarray, layer_id: Optional[int] = None) -> PreShape:
    """
    Projeta um mapa de features no Pre-Shape Space.

    Args:
        feature: Mapa de features (c x h x w ou já 2 x m).
        layer_id: Camada de origem, usada nas mensagens de erro.

    Returns:
        PreShape: Configuração centralizada e normalizada.

    Raises:
        GeometryError: Volume ímpar ou norma nula após a centralização.
    """
    matriz = layout_matrix(feature, layer_id)

    # Q: remove a média de cada linha
    centrada = matriz - matriz.mean(axis=1, keepdims=True)

    # V: divide pela norma de Frobenius
    norma = np.linalg.norm(centrada)
    if norma * norma <= GEOMETRY_PARAMS["eps_degenerado"]:
        raise GeometryError(f"degenerate feature (norma nula após centralização{_camada(layer_id)})")
    return PreShape(centrada / norma)


def restore_layout(tau: PreShape, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Inverte o layout R: devolve a matriz 2 x m na forma do mapa original.
    """
    return tau.points.reshape(shape).copy()


def random_preshape(m: int, rng: np.random.Generator) -> PreShape:
    return project_preshape(rng.standard_normal((2, m)))


# ----------------------------------------------------------------------
# Distância e curva geodésica
# ----------------------------------------------------------------------

def geodesic_distance(tau_1: PreShape, tau_2: PreShape) -> float:
    """
    Distância geodésica d = arccos(<tau_1, tau_2>), em [0, pi].

    Calculada como 2 atan2(||tau_1 - tau_2||, ||tau_1 + tau_2||), exata em
    extremos coincidentes (d = 0) e antipodais (d = pi).
    """
    if tau_1.points.shape != tau_2.points.shape:
        raise GeometryError(
            f"pre-shapes com formas diferentes: {tau_1.points.shape} e {tau_2.points.shape}"
        )
    corda = np.linalg.norm(tau_1.points - tau_2.points)
    oposta = np.linalg.norm(tau_1.points + tau_2.points)
    return float(2.0 * np.arctan2(corda, oposta))


def geodesic_curve_point(spec: GeodesicSpec) -> PreShape:
    """
    Ponto G(tau_1, tau_2)(s) da curva geodésica.

    G(s) = cos(s) tau_1 + sin(s) (tau_2 - tau_1 cos d) / sin d

    Args:
        spec: Extremos, distância d e parâmetro de arco s.

    Returns:
        PreShape: Ponto a distância s de tau_1 ao longo da curva.

    Raises:
        GeometryError: Extremos antipodais (direção indefinida) com s interior.
    """
    d, s = spec.d, spec.s

    # Extremos coincidentes: limite analítico
    if d <= GEOMETRY_PARAMS["eps_coincidente"] or s <= 0.0:
        return spec.tau_1.copy()
    if s >= d:
        return spec.tau_2.copy()
    if d >= np.pi - GEOMETRY_PARAMS["eps_antipodal"]:
        raise GeometryError(f"antipodal pre-shapes (d = {d!r})")

    tau_1, tau_2 = spec.tau_1.points, spec.tau_2.points
    # Componente de tau_2 tangente a tau_1, de norma sin d
    tangente = tau_2 - tau_1 * np.sum(tau_1 * tau_2)
    norma_tangente = np.linalg.norm(tangente)
    if norma_tangente == 0.0:
        return spec.tau_1.copy()
    direcao = tangente / norma_tangente
    ponto = np.cos(s) * tau_1 + np.sin(s) * direcao

    # Remove o erro de arredondamento acumulado na norma
    return PreShape(ponto / np.linalg.norm(ponto))


def curve_point_at_fraction(tau_1: PreShape, tau_2: PreShape, fraction: float) -> PreShape:
    """
    Ponto da curva geodésica na posição fracionária fraction (s = fraction * d).
    """
    if not 0.0 <= fraction <= 1.0:
        raise GeometryError(f"fração fora de [0, 1]: {fraction}")
    d = geodesic_distance(tau_1, tau_2)
    if fraction >= 1.0:
        return tau_2.copy()
    return geodesic_curve_point(GeodesicSpec(tau_1, tau_2, s=fraction * d, d=d))


# ----------------------------------------------------------------------
# Superfície geodésica por curvas iteradas
# ----------------------------------------------------------------------

def iterate_geodesic_surface(taus: Sequence[PreShape], omega: WeightsLike) -> Iterator[SurfaceIterationState]:
    """
    Constrói o baricentro por curvas iteradas, na ordem da lista de entrada.

    mu_1 = tau_1 e mu_j = G(mu_{j-1}, tau_j) na fração omega_j / sum_{i<=j} omega_i.

    Args:
        taus: n pre-shapes de mesma forma.
        omega: n pesos não negativos de soma positiva.

    Yields:
        SurfaceIterationState: Estado após cada iteração (j = 1..n).
    """
    pesos = _as_weights(omega).weights
    if len(taus) == 0:
        raise GeometryError("lista de pre-shapes vazia")
    if len(taus) != pesos.size:
        raise GeometryError(f"{len(taus)} pre-shapes para {pesos.size} pesos")

    mu = taus[0]
    acumulado = float(pesos[0])
    yield SurfaceIterationState(mu=mu, j=1, cumulative_weight=acumulado)

    for j in range(1, len(taus)):
        acumulado += float(pesos[j])
        fracao = float(pesos[j]) / acumulado if acumulado > 0 else 0.0
        if fracao > 0.0:
            mu = curve_point_at_fraction(mu, taus[j], min(fracao, 1.0))
        yield SurfaceIterationState(mu=mu, j=j + 1, cumulative_weight=acumulado)


def geodesic_surface_point(taus: Sequence[PreShape], omega: WeightsLike) -> PreShape:
    """
    Ponto G_surf(tau, omega) = mu_n da superfície geodésica.

    Args:
        taus: n pre-shapes de mesma forma.
        omega: Pesos baricêntricos (apenas as razões importam).

    Returns:
        PreShape: Baricentro final mu_n.
    """
    estado: Optional[SurfaceIterationState] = None
    for estado in iterate_geodesic_surface(taus, omega):
        logger.debug("Iteração %d da superfície (peso acumulado %.6g)", estado.j, estado.cumulative_weight)
    return estado.mu


def surface_trace(taus: Sequence[PreShape], omega: WeightsLike) -> List[PreShape]:
    return [estado.mu for estado in iterate_geodesic_surface(taus, omega)]
