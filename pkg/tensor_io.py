"""
Módulo de leitura e escrita do formato binário de tensores GSL1.

Layout do arquivo: bytes mágicos "GSL1", rank (u32), rank extents (u64) e o
payload em float64 little-endian, em ordem row-major.
"""

import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

logger = logging.getLogger(__name__)

GSL1_MAGIC = b"GSL1"
GSL1_SUFFIX = ".gsl1"


class TensorFormatError(ValueError):
    """Arquivo GSL1 inválido ou truncado."""


def encode_tensor(values: np.ndarray) -> bytes:
    """
    Serializa um arranjo no formato GSL1.

    Args:
        values: Arranjo numérico de qualquer forma.

    Returns:
        bytes: Conteúdo do arquivo.
    """
    valores = np.asarray(values, dtype="<f8", order="C")
    cabecalho = GSL1_MAGIC + struct.pack("<I", valores.ndim)
    cabecalho += struct.pack(f"<{valores.ndim}Q", *valores.shape)
    return cabecalho + valores.tobytes(order="C")


def decode_tensor(payload: bytes, origem: str = "<bytes>") -> np.ndarray:
    """
    Decodifica o conteúdo de um arquivo GSL1.

    Args:
        payload: Bytes do arquivo.
        origem: Nome usado nas mensagens de erro.

    Returns:
        np.ndarray: Arranjo float64 com a forma gravada.

    Raises:
        TensorFormatError: Magic inválido ou tamanho inconsistente com o cabeçalho.
    """
    if payload[:4] != GSL1_MAGIC:
        raise TensorFormatError(f"{origem}: bytes mágicos inválidos (esperado GSL1)")
    if len(payload) < 8:
        raise TensorFormatError(f"{origem}: arquivo truncado no cabeçalho")

    rank = struct.unpack_from("<I", payload, 4)[0]
    inicio = 8 + 8 * rank
    if len(payload) < inicio:
        raise TensorFormatError(f"{origem}: arquivo truncado nas dimensões")
    shape = struct.unpack_from(f"<{rank}Q", payload, 8)

    # O payload deve ter exatamente prod(shape) valores float64
    esperado = 8 * int(np.prod(shape, dtype=np.int64))
    if len(payload) - inicio != esperado:
        raise TensorFormatError(
            f"{origem}: payload com {len(payload) - inicio} bytes, esperado {esperado}"
        )
    return np.frombuffer(payload, dtype="<f8", offset=inicio).astype(np.float64).reshape(shape)


def write_tensor(path: Union[str, Path], values: np.ndarray) -> Path:
    """
    Grava um tensor GSL1 de forma atômica (arquivo temporário + rename).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temporario = path.with_name(path.name + ".tmp")
    temporario.write_bytes(encode_tensor(values))
    os.replace(temporario, path)
    return path


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise TensorFormatError(f"Erro ao ler o tensor {path}: {e}") from e
    return decode_tensor(payload, origem=str(path))


def read_tensor_dir(directory: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    Lê todos os arquivos .gsl1 de um diretório, em ordem de nome.

    Args:
        directory: Diretório com os tensores.

    Returns:
        Dict[str, np.ndarray]: Tensores indexados pelo nome do arquivo sem extensão.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise TensorFormatError(f"diretório de tensores inexistente: {directory}")
    arquivos: List[Path] = sorted(directory.glob(f"*{GSL1_SUFFIX}"))
    logger.debug("Lendo %d tensores de %s", len(arquivos), directory)
    return {arquivo.stem: read_tensor(arquivo) for arquivo in arquivos}
