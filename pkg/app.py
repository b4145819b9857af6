"""
Interface de linha de comando do motor de treinamento ITBGS.

Este módulo contém os subcomandos train, augment, interpolate, gradcheck,
metrics, ablate e blobs, e o mapeamento de erros para códigos de saída
(0 sucesso, 1 falha, 2 uso incorreto).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ablation import run_ablation
from checkpoint import checkpoint_seed, load_checkpoint
from config import GRADCHECK_PARAMS, TrainConfig, load_config
from fags import augment_directory
from gradcheck import GRADCHECK_TARGETS, reports_table, run_gradcheck, suite_passed
from iandr import InterpolationSpec, interpolation_set
from image_data import load_dataset, make_blob_dataset, save_image_grid, write_pgm
from metrics import append_metrics, evaluate, interpolation_smoothness
from networks import generator_forward
from training import train

logger = logging.getLogger("itbgs")

# Exceções de domínio tratadas como falha de execução (código 1)
ERROS_EXECUCAO = (ValueError, ArithmeticError, RuntimeError, OSError)


def comando_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override)
    resultado = train(config)
    print(f"checkpoint: {resultado.checkpoint}")
    print(f"losses: {resultado.losses_csv}")
    return 0


def comando_augment(args: argparse.Namespace) -> int:
    escritos = augment_directory(args.features, args.n, args.alpha, args.seed, args.out)
    for nome, caminho in escritos.items():
        print(f"{nome}: {caminho}")
    return 0


def comando_interpolate(args: argparse.Namespace) -> int:
    """
    Gera k imagens ao longo de um caminho latente e a suavidade do caminho.
    """
    state = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    z_inicio = rng.standard_normal(state.gen.latent_dim)
    z_fim = rng.standard_normal(state.gen.latent_dim)

    # Suavidade primeiro: falha com k < 3 antes de escrever arquivos
    suavidade = interpolation_smoothness(state.gen, z_inicio, z_fim, args.k)
    latentes = interpolation_set(InterpolationSpec(z_inicio, z_fim, args.k))
    imagens, _ = generator_forward(state.gen, latentes)

    out = Path(args.out)
    for i, imagem in enumerate(imagens.data):
        write_pgm(out / f"interp_{i:02d}.pgm", imagem)
    save_image_grid(out / "interpolation.png", imagens.data)
    (out / "smoothness.txt").write_text(f"{suavidade:.17g}\n", encoding="utf-8")
    print(f"smoothness: {suavidade:.6f}")
    return 0


def comando_gradcheck(args: argparse.Namespace) -> int:
    resultados = run_gradcheck(args.target, seed=args.seed, samples=args.samples)
    tabela = reports_table(resultados)
    print(tabela.to_string(index=False))
    aprovado = all(suite_passed(r) for r in resultados.values())
    if not aprovado:
        logger.error("Gradientes fora da tolerância: %s",
                     ", ".join(nome for nome, r in resultados.items() if not suite_passed(r)))
    return 0 if aprovado else 1


def comando_metrics(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    semente = args.seed if args.seed is not None else checkpoint_seed(args.checkpoint)
    config = TrainConfig(latent_dim=state.gen.latent_dim, image_size=state.gen.image_size,
                         seed=semente, eval_samples=args.samples)
    report = state.history[-1] if state.history else None
    linha = evaluate(state.gen, state.disc, dataset.images, config, state.step, report)

    saida = Path(args.out)
    if saida.exists():
        saida.unlink()
    append_metrics(saida, linha)
    print(f"diversity={linha.diversity:.6f} ffd={linha.ffd:.6f} smoothness={linha.smoothness:.6f}")
    return 0


def comando_ablate(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override)
    sementes = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    resultado = run_ablation(config, seeds=sementes, extended=args.extended)
    print(resultado.summary.to_string(index=False))
    print(f"comparação: {resultado.runs_csv}")
    return 0


def comando_blobs(args: argparse.Namespace) -> int:
    arquivos = make_blob_dataset(args.out, n=args.n, size=args.size, seed=args.seed)
    print(f"{len(arquivos)} imagens em {args.out}")
    return 0


def criar_parser() -> argparse.ArgumentParser:
    """
    Cria o parser de argumentos com todos os subcomandos.
    """
    parser = argparse.ArgumentParser(prog="itbgs", description="Treinamento few-shot ITBGS em escala de bancada")
    parser.add_argument("--verbose", action="store_true", help="log em nível DEBUG")
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("train", help="treina o par gerador/discriminador")
    p.add_argument("--config", required=True, help="arquivo key=value")
    p.add_argument("--override", nargs="*", default=[], metavar="k=v", help="sobrescreve chaves do arquivo")
    p.set_defaults(func=comando_train)

    p = sub.add_parser("augment", help="gera features pseudo-fonte a partir de tensores GSL1")
    p.add_argument("--features", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=comando_augment)

    p = sub.add_parser("interpolate", help="imagens ao longo de um caminho latente")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=comando_interpolate)

    p = sub.add_parser("gradcheck", help="verificação de gradientes por diferenças finitas")
    p.add_argument("--target", choices=list(GRADCHECK_TARGETS) + ["all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=GRADCHECK_PARAMS["samples"])
    p.set_defaults(func=comando_gradcheck)

    p = sub.add_parser("metrics", help="métricas de um checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=comando_metrics)

    p = sub.add_parser("ablate", help="grade FAGS x I&R")
    p.add_argument("--config", required=True)
    p.add_argument("--override", nargs="*", default=[], metavar="k=v")
    p.add_argument("--seeds", default="", help="sementes separadas por vírgula")
    p.add_argument("--extended", action="store_true", help="inclui inp_only, fags_direct e fags_smooth_l1")
    p.set_defaults(func=comando_ablate)

    p = sub.add_parser("blobs", help="gera o conjunto sintético de manchas")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=comando_blobs)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Função principal da linha de comando.

    Returns:
        int: Código de saída.
    """
    parser = criar_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ERROS_EXECUCAO as e:
        logger.error("Erro ao executar %s: %s", args.comando, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
