"""
Módulo para leitura e escrita de imagens do conjunto de treinamento.

Este módulo contém a carga do conjunto few-shot (PGM, PNG ou tensores GSL1),
a escrita de imagens PGM e de grades PNG, e a geração do conjunto sintético de
manchas gaussianas usado nos experimentos de bancada.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.image as mpimg
import matplotlib.pyplot as plt
import numpy as np

from tensor_io import GSL1_SUFFIX, TensorFormatError, read_tensor

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".png", GSL1_SUFFIX)


class DatasetError(ValueError):
    """Conjunto de imagens ausente, vazio ou inconsistente."""


@dataclass
class Dataset:
    """
    Imagens 1 x H x W em [-1, 1], ordenadas pelo nome do arquivo.
    """
    ids: List[str]
    images: np.ndarray
    source: Path

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]

    def batch(self, indices: Sequence[int]) -> np.ndarray:
        return self.images[np.asarray(indices, dtype=np.int64)]


def pixels_to_unit(values: np.ndarray) -> np.ndarray:
    """Converte pixels v em [0, 255] para v / 127.5 - 1."""
    return np.asarray(values, dtype=np.float64) / 127.5 - 1.0


def unit_to_pixels(values: np.ndarray) -> np.ndarray:
    """Inverso de pixels_to_unit, arredondado para uint8."""
    return np.clip(np.rint((np.asarray(values, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _read_raster(path: Path) -> np.ndarray:
    # PGM e PNG são lidos pelo matplotlib (via Pillow)
    dados = mpimg.imread(str(path))
    if dados.ndim == 3:
        rgb = dados[..., :3]
        if not (np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 0], rgb[..., 2])):
            raise DatasetError(f"Erro ao ler a imagem {path}: apenas tons de cinza são suportados")
        dados = rgb[..., 0]
    if np.issubdtype(dados.dtype, np.floating):
        # PNG é devolvido em [0, 1]
        dados = np.rint(dados.astype(np.float64) * 255.0)
    return pixels_to_unit(dados)


def read_image(path: Union[str, Path]) -> np.ndarray:
    """
    Lê uma imagem em tons de cinza e devolve um mapa 1 x H x W em [-1, 1].

    Args:
        path: Arquivo .pgm (P5), .png (8 bits) ou .gsl1 (valores já em [-1, 1]).

    Returns:
        np.ndarray: Imagem 1 x H x W.
    """
    path = Path(path)
    try:
        if path.suffix.lower() == GSL1_SUFFIX:
            imagem = read_tensor(path)
            if imagem.size and (imagem.min() < -1.0 or imagem.max() > 1.0):
                raise DatasetError(f"Erro ao ler a imagem {path}: valores fora de [-1, 1]")
        else:
            imagem = _read_raster(path)
    except (OSError, ValueError, SyntaxError) as e:
        if isinstance(e, DatasetError):
            raise
        raise DatasetError(f"Erro ao ler a imagem {path}: {e}") from e

    if imagem.ndim == 2:
        imagem = imagem[None]
    if imagem.ndim != 3 or imagem.shape[0] != 1:
        raise DatasetError(f"Erro ao ler a imagem {path}: forma {imagem.shape} não é 1 x H x W")
    return imagem


def load_dataset(path: Union[str, Path]) -> Dataset:
    """
    Carrega um diretório de imagens em tons de cinza.

    Args:
        path: Diretório com arquivos PGM, PNG e/ou GSL1.

    Returns:
        Dataset: Imagens ordenadas pelo nome do arquivo.

    Raises:
        DatasetError: Diretório inexistente ou vazio, arquivo ilegível ou
            dimensões diferentes entre imagens.
    """
    diretorio = Path(path)
    if not diretorio.is_dir():
        raise DatasetError(f"no images found: diretório inexistente {diretorio}")

    arquivos = sorted(p for p in diretorio.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not arquivos:
        raise DatasetError(f"no images found em {diretorio}")

    imagens = []
    for arquivo in arquivos:
        imagem = read_image(arquivo)
        if imagens and imagem.shape != imagens[0].shape:
            raise DatasetError(
                f"dimensões mistas: {imagens[0].shape} em {arquivos[0].name} e {imagem.shape} em {arquivo.name}"
            )
        imagens.append(imagem)

    logger.info("Conjunto carregado: %d imagens %s de %s", len(imagens), imagens[0].shape, diretorio)
    return Dataset(ids=[a.name for a in arquivos], images=np.stack(imagens), source=diretorio)


def write_pgm(path: Union[str, Path], image: np.ndarray) -> Path:
    """
    Grava uma imagem em [-1, 1] como PGM binário (P5, 8 bits).
    """
    path = Path(path)
    pixels = unit_to_pixels(np.asarray(image).reshape(np.asarray(image).shape[-2:]))
    altura, largura = pixels.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{largura} {altura}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def save_image_grid(path: Union[str, Path], images: np.ndarray, columns: int = 0) -> Path:
    """
    Salva um lote (n, 1, H, W) em [-1, 1] como uma grade PNG.

    Args:
        path: Arquivo de saída.
        images: Imagens.
        columns: Colunas da grade (0 = todas em uma linha).

    Returns:
        Path: Caminho gravado.
    """
    imagens = np.asarray(images, dtype=np.float64)
    n, _, h, w = imagens.shape
    colunas = columns or n
    linhas = -(-n // colunas)
    grade = np.full((linhas * (h + 1) - 1, colunas * (w + 1) - 1), -1.0)
    for i in range(n):
        r, c = divmod(i, colunas)
        grade[r * (h + 1):r * (h + 1) + h, c * (w + 1):c * (w + 1) + w] = imagens[i, 0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, grade, cmap="gray", vmin=-1.0, vmax=1.0, format="png", metadata={"Software": None})
    return path


def make_blob_dataset(out_dir: Union[str, Path], n: int = 10, size: int = 16, seed: int = 0) -> List[Path]:
    """
    Gera um conjunto sintético de manchas gaussianas em PGM.

    Cada imagem tem de 1 a 3 manchas com centro, raio e intensidade sorteados.

    Args:
        out_dir: Diretório de saída.
        n: Número de imagens.
        size: Lado das imagens.
        seed: Semente do gerador.

    Returns:
        List[Path]: Arquivos gravados (blob_00.pgm, blob_01.pgm, ...).
    """
    if n < 1 or size < 4:
        raise DatasetError(f"parâmetros inválidos para o conjunto sintético: n={n}, size={size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    arquivos = []
    for i in range(n):
        intensidade = np.zeros((size, size))
        for _ in range(int(rng.integers(1, 4))):
            cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
            sigma = rng.uniform(0.08 * size, 0.2 * size)
            intensidade += rng.uniform(0.6, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        imagem = 2.0 * np.clip(intensidade, 0.0, 1.0) - 1.0
        arquivos.append(write_pgm(Path(out_dir) / f"blob_{i:02d}.pgm", imagem))
    logger.info("Conjunto sintético com %d imagens %dx%d gravado em %s", n, size, size, out_dir)
    return arquivos
