"""
Configurações globais do motor de treinamento ITBGS em escala de bancada.

Este módulo contém constantes, parâmetros e a configuração de treinamento
(TrainConfig) utilizados em todo o projeto.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

logger = logging.getLogger(__name__)

# Parâmetros de treinamento (valores padrão da TrainConfig)
TRAIN_PARAMS = {
    "lambda1": 0.8,           # peso de L_inp (gerador e discriminador)
    "lambda2": 1.25,          # peso de L_dr (somente gerador)
    "lambda3": 0.8,           # peso de L_g (somente discriminador)
    "batch_size": 4,
    "interp_size": 4,         # k, tamanho da interpolação
    "steps": 2000,
    "lr_g": 2e-4,
    "lr_d": 2e-4,
    "beta1": 0.5,
    "beta2": 0.999,
    "dirichlet_alpha": 1.0,
    "latent_dim": 64,
    "image_size": 16,
    "seed": 0,
    "checkpoint_every": 250,
    "eval_every": 250,
    "eval_samples": 16,
}

# Parâmetros numéricos do motor de tensores
NUMERIC_PARAMS = {
    "prob_eps": 1e-7,         # clamp de probabilidades em log(p) e log(1-p)
    "leaky_slope": 0.2,
    "adam_eps": 1e-8,
}

# Tolerâncias da geometria do Pre-Shape Space
GEOMETRY_PARAMS = {
    "tol_centro": 1e-9,       # média das linhas após centralização
    "tol_norma": 1e-9,        # |norma de Frobenius - 1|
    "eps_coincidente": 1e-12, # d abaixo disso: extremos coincidentes
    "eps_antipodal": 1e-9,    # d acima de pi - eps: extremos antipodais
    "eps_degenerado": 1e-30,  # norma ao quadrado considerada nula
}

# Arquitetura das redes de brinquedo
NETWORK_PARAMS = {
    "gen_base_channels": 32,  # canais da projeção densa 4x4
    "gen_min_channels": 8,
    "disc_base_channels": 8,  # canais da primeira convolução do discriminador
    "kernel_size": 3,
    "base_resolution": 4,
}

# Parâmetros da verificação de gradientes por diferenças finitas
GRADCHECK_PARAMS = {
    "step": 1e-5,
    "tol": 1e-4,
    "atol": 1e-10,            # diferença absoluta aceita em gradientes nulos
    "min_fraction": 0.99,
    "samples": 32,            # coordenadas amostradas por tensor de parâmetros
}

# Colunas dos arquivos CSV
LOSS_COLUMNS = ["step", "l_adv_g", "l_adv_d", "l_inp", "l_dr", "l_g", "total_g", "total_d"]
METRICS_COLUMNS = ["step", "l_adv_g", "l_adv_d", "l_inp", "l_dr", "l_g", "diversity", "ffd", "smoothness"]

# Presets da ablação (FAGS ligado/desligado x I&R ligado/desligado)
ABLATION_PRESETS = {
    "itbgs": {"fags_on": True, "iandr_on": True},
    "fags_only": {"fags_on": True, "iandr_on": False},
    "iandr_only": {"fags_on": False, "iandr_on": True},
    "plain_gan": {"fags_on": False, "iandr_on": False},
}

# Variantes adicionais da ablação (ablate --extended)
ABLATION_EXTENDED = {
    "inp_only": {"fags_on": True, "iandr_on": True, "dr_on": False},
    "fags_direct": {"fags_on": True, "iandr_on": True, "fags_source": "direct"},
    "fags_smooth_l1": {"fags_on": True, "iandr_on": True, "fags_loss": "smooth_l1"},
}

FAGS_SOURCES = ("surface", "direct")
FAGS_LOSSES = ("scc", "smooth_l1")

CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Erro de configuração (chave desconhecida ou valor inválido)."""


@dataclass
class TrainConfig:
    """
    Todos os hiperparâmetros de uma execução de treinamento.

    Os valores padrão vêm de TRAIN_PARAMS; tap_layers vazio significa as duas
    últimas camadas convolucionais do discriminador.
    """
    lambda1: float = TRAIN_PARAMS["lambda1"]
    lambda2: float = TRAIN_PARAMS["lambda2"]
    lambda3: float = TRAIN_PARAMS["lambda3"]
    batch_size: int = TRAIN_PARAMS["batch_size"]
    interp_size: int = TRAIN_PARAMS["interp_size"]
    steps: int = TRAIN_PARAMS["steps"]
    lr_g: float = TRAIN_PARAMS["lr_g"]
    lr_d: float = TRAIN_PARAMS["lr_d"]
    beta1: float = TRAIN_PARAMS["beta1"]
    beta2: float = TRAIN_PARAMS["beta2"]
    dirichlet_alpha: float = TRAIN_PARAMS["dirichlet_alpha"]
    latent_dim: int = TRAIN_PARAMS["latent_dim"]
    image_size: int = TRAIN_PARAMS["image_size"]
    tap_layers: Tuple[int, ...] = ()
    seed: int = TRAIN_PARAMS["seed"]
    dataset: str = ""
    out_dir: str = "runs/default"
    resume: str = ""
    checkpoint_every: int = TRAIN_PARAMS["checkpoint_every"]
    eval_every: int = TRAIN_PARAMS["eval_every"]
    eval_samples: int = TRAIN_PARAMS["eval_samples"]
    fags_on: bool = True
    iandr_on: bool = True
    dr_on: bool = True
    fags_source: str = "surface"
    fags_loss: str = "scc"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """
        Valida os invariantes da configuração.

        Raises:
            ConfigError: Se algum valor estiver fora do domínio permitido.
        """
        for nome in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, nome) < 0:
                raise ConfigError(f"{nome} deve ser >= 0 (recebido {getattr(self, nome)})")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size deve ser >= 1 (recebido {self.batch_size})")
        if self.interp_size < 2:
            raise ConfigError(f"interp_size deve ser >= 2 (recebido {self.interp_size})")
        if self.steps < 0:
            raise ConfigError(f"steps deve ser >= 0 (recebido {self.steps})")
        if self.dirichlet_alpha <= 0:
            raise ConfigError(f"dirichlet_alpha deve ser > 0 (recebido {self.dirichlet_alpha})")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim deve ser >= 1 (recebido {self.latent_dim})")
        size = self.image_size
        if size < 8 or size & (size - 1):
            raise ConfigError(f"image_size deve ser potência de 2 >= 8 (recebido {size})")
        if min(self.checkpoint_every, self.eval_every) < 1 or self.eval_samples < 2:
            raise ConfigError("checkpoint_every e eval_every devem ser >= 1 e eval_samples >= 2")
        if self.fags_source not in FAGS_SOURCES:
            raise ConfigError(f"fags_source desconhecido: {self.fags_source}")
        if self.fags_loss not in FAGS_LOSSES:
            raise ConfigError(f"fags_loss desconhecido: {self.fags_loss}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Union[str, int, float, bool, Tuple[int, ...]]]:
        return dataclasses.asdict(self)


def _coerce(nome: str, texto: str, tipo: type):
    texto = texto.strip()
    try:
        if tipo is bool:
            if texto.lower() in ("1", "true", "yes", "on", "sim"):
                return True
            if texto.lower() in ("0", "false", "no", "off", "nao", "não"):
                return False
            raise ValueError(texto)
        if tipo is int:
            return int(texto)
        if tipo is float:
            return float(texto)
        if tipo is tuple:
            return tuple(int(parte) for parte in texto.replace(",", " ").split())
        return texto
    except ValueError:
        raise ConfigError(f"valor inválido para {nome}: {texto!r}") from None


def _field_types() -> Dict[str, type]:
    tipos = {}
    for campo in dataclasses.fields(TrainConfig):
        padrao = campo.default
        tipos[campo.name] = tuple if isinstance(padrao, tuple) else type(padrao)
    return tipos


def parse_key_values(linhas: List[str], origem: str = "config") -> Dict[str, str]:
    """
    Lê pares key=value, ignorando linhas vazias e comentários (#).

    Args:
        linhas: Linhas de texto.
        origem: Nome usado nas mensagens de erro.

    Returns:
        Dict[str, str]: Valores ainda em texto, indexados pela chave.
    """
    valores = {}
    for numero, linha in enumerate(linhas, start=1):
        linha = linha.split("#", 1)[0].strip()
        if not linha:
            continue
        if "=" not in linha:
            raise ConfigError(f"{origem}:{numero}: esperado key=value, recebido {linha!r}")
        chave, valor = linha.split("=", 1)
        valores[chave.strip()] = valor.strip()
    return valores


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[List[str]] = None) -> TrainConfig:
    """
    Carrega a TrainConfig de um arquivo key=value, aplicando sobrescritas.

    Args:
        path: Caminho do arquivo de configuração (opcional).
        overrides: Lista de strings "k=v" que sobrescrevem o arquivo.

    Returns:
        TrainConfig: Configuração validada.
    """
    valores: Dict[str, str] = {}
    if path is not None:
        try:
            linhas = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ConfigError(f"Erro ao ler o arquivo de configuração {path}: {e}") from e
        valores.update(parse_key_values(linhas, origem=str(path)))
    if overrides:
        valores.update(parse_key_values(list(overrides), origem="--override"))

    tipos = _field_types()
    convertidos = {}
    for chave, texto in valores.items():
        if chave not in tipos:
            raise ConfigError(f"chave de configuração desconhecida: {chave}")
        convertidos[chave] = _coerce(chave, texto, tipos[chave])

    config = TrainConfig(**convertidos)
    logger.debug("Configuração carregada: %s", config)
    return config


def dump_config(config: TrainConfig) -> str:
    """
    Serializa a configuração no mesmo formato key=value lido por load_config.
    """
    linhas = []
    for chave, valor in config.to_dict().items():
        if isinstance(valor, tuple):
            valor = ",".join(str(v) for v in valor)
        elif isinstance(valor, bool):
            valor = "true" if valor else "false"
        elif isinstance(valor, float):
            valor = repr(valor)
        linhas.append(f"{chave}={valor}")
    return "\n".join(linhas) + "\n"
