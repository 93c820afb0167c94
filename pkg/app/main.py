"""
Poinçon - Point d'entrée en ligne de commande.
Prédiction de courbes contrainte-déformation à partir d'essais de poinçonnement (SPT).

Codes de sortie: 0 succès, 2 erreur d'utilisation ou de configuration, 1 erreur d'exécution.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from app.config import settings
from app.core.exceptions import ConfigurationError, DomainError, SptError
from app.core.logging import logger, setup_logging
from app.schemas.cli import CliConfig, build_cli_config, load_config_file, nest_dotted
from app.schemas.material import CurvePair, Dataset, DatasetManifest, Split
from app.schemas.training import F2DReduction, LossKind
from app.services.evaluation_service import (
    check_grid,
    compare_reports,
    emit_dataset_overview,
    emit_plot,
    evaluate_detailed,
    extreme_samples,
    predict_curves,
    read_report,
    write_comparison,
    write_report,
)
from app.services.gaf_service import gaf_service
from app.services.material_service import describe_dataset, generate_dataset, read_csv, write_csv
from app.services.training_service import Checkpoint, load_checkpoint, save_checkpoint, train, write_loss_history


EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
MANIFEST_FILE = "manifest.json"


# ---------------------------------------------------------------------------
# Analyse des arguments
# ---------------------------------------------------------------------------


def _flag(parser: argparse.ArgumentParser, name: str, dest: str, const: Any, help_text: str) -> None:
    parser.add_argument(name, dest=dest, action="store_const", const=const, default=None, help=help_text)


def _add_data_args(parser: argparse.ArgumentParser, with_split: bool = True) -> None:
    parser.add_argument("--data", dest="data_dir", help="Répertoire du jeu de données")
    if with_split:
        parser.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("entraînement")
    group.add_argument("--epochs", dest="train.epochs", type=int)
    group.add_argument("--batch-size", dest="train.batch_size", type=int)
    group.add_argument("--lr", dest="train.lr", type=float)
    group.add_argument("--teacher-forcing", dest="train.teacher_forcing_ratio", type=float)
    group.add_argument("--seed", dest="train.seed", type=int)
    group.add_argument("--hidden-size", dest="train.hidden_size", type=int)
    group.add_argument("--num-layers", dest="train.num_layers", type=int)
    group.add_argument("--num-heads", dest="train.num_heads", type=int)
    group.add_argument("--dropout", dest="train.dropout", type=float)
    group.add_argument("--grad-clip", dest="train.grad_clip", type=float)
    group.add_argument("--loss", dest="train.loss_kind", choices=[k.value for k in LossKind])
    group.add_argument("--f2d-reduction", dest="train.f2d_reduction", choices=[r.value for r in F2DReduction])
    group.add_argument("--max-train-samples", dest="max_train_samples", type=int)
    _flag(group, "--paper-exact", "train.paper_exact", True, "Attention littérale: une tête, sans projection")
    _flag(group, "--baseline-1d", "train.gaf_enabled", False, "Modèle LSTM 1D de référence (sans GAF)")
    _flag(group, "--no-attention", "train.attention_enabled", False, "Seq2seq sans attention croisée")
    group.add_argument(
        "--paper-arch", "--full-arch", dest="full_arch", action="store_true",
        help="Architecture complète (128 × 5 couches, 4 têtes); les options explicites restent prioritaires",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Fichier de configuration JSON")
    common.add_argument("--log-level", help="Niveau de log (défaut: LOG_LEVEL)")
    common.add_argument("--log-file", help="Copie des logs dans ce fichier, avec rotation")

    parser = argparse.ArgumentParser(
        prog="poincon",
        description="Prédiction de courbes contrainte-déformation à partir d'essais de poinçonnement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Génère les partitions synthétiques")
    p.add_argument("--n-train", dest="generation.n_train", type=int)
    p.add_argument("--n-test", dest="generation.n_test", type=int)
    p.add_argument("--seed", dest="generation.seed", type=int)
    p.add_argument("--l-in", dest="generation.l_in", type=int)
    p.add_argument("--l-out", dest="generation.l_out", type=int)
    p.add_argument("--delta-max", dest="generation.delta_max", type=float)
    p.add_argument("--eps-max", dest="generation.eps_max", type=float)
    p.add_argument("--out", dest="data_dir", help="Répertoire de sortie")

    p = sub.add_parser("describe", parents=[common], help="Résumé des partitions")
    _add_data_args(p, with_split=False)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("train", parents=[common], help="Entraîne un modèle")
    _add_data_args(p, with_split=False)
    p.add_argument("--out", dest="output_dir")
    _add_train_args(p)

    p = sub.add_parser("evaluate", parents=[common], help="Évalue un checkpoint")
    _add_data_args(p)
    p.add_argument("--checkpoint", dest="checkpoint")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--plot-extremes", action="store_true", help="Superpositions des MAE minimale et maximale")

    p = sub.add_parser("predict", parents=[common], help="Prédit la courbe d'un échantillon")
    _add_data_args(p)
    p.add_argument("--checkpoint", dest="checkpoint")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("export-gaf", parents=[common], help="Exporte les images GAF (PGM et CSV)")
    _add_data_args(p)
    p.add_argument("--index", type=int, help="Un seul échantillon (tous sinon)")
    p.add_argument("--limit", type=int, help="Nombre maximal d'échantillons exportés")
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("plot", parents=[common], help="Superposition prédiction / référence")
    _add_data_args(p)
    p.add_argument("--checkpoint", dest="checkpoint")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("plot-dataset", parents=[common], help="Vue d'ensemble d'une partition (PNG)")
    _add_data_args(p)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("compare", parents=[common], help="Compare plusieurs rapports d'évaluation")
    p.add_argument("reports", nargs="+", help="Rapports JSON")
    p.add_argument("--out", dest="output_dir")

    return parser


_CONFIG_ROOTS = set(CliConfig.model_fields)


def config_from_args(args: argparse.Namespace) -> CliConfig:
    """Configuration effective: défauts < --config < --paper-arch < options."""
    flat = {
        key: value for key, value in vars(args).items()
        if key.split(".")[0] in _CONFIG_ROOTS and key != "command"
    }
    file_data = load_config_file(args.config) if args.config else None
    return build_cli_config(
        file_data=file_data,
        overrides={**nest_dotted(flat), "command": args.command},
        full_arch=getattr(args, "full_arch", False),
    )


# ---------------------------------------------------------------------------
# Commandes
# ---------------------------------------------------------------------------


def _provenance(config: CliConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def _load_split(config: CliConfig, split: str) -> Dataset:
    path = Path(config.data_dir) / (TRAIN_FILE if split == Split.TRAIN.value else TEST_FILE)
    if not path.exists():
        raise FileNotFoundError(f"Jeu de données introuvable: {path}")
    return read_csv(path)


def _load_checkpoint(config: CliConfig) -> Checkpoint:
    if not config.checkpoint:
        raise ConfigurationError("--checkpoint requis pour cette commande")
    return load_checkpoint(config.checkpoint)


def _sample(ds: Dataset, index: int) -> CurvePair:
    if not 0 <= index < len(ds):
        raise DomainError(f"Index {index} hors de la partition ({len(ds)} échantillons)")
    return ds[index]


def cmd_generate(args: argparse.Namespace, config: CliConfig) -> int:
    gen = config.generation
    train_ds, test_ds = generate_dataset(
        n_train=gen.n_train,
        n_test=gen.n_test,
        seed=gen.seed,
        l_in=gen.l_in,
        l_out=gen.l_out,
        delta_max=gen.delta_max,
        eps_max=gen.eps_max,
    )
    out = Path(config.data_dir)
    provenance = _provenance(config)
    write_csv(train_ds, out / TRAIN_FILE, provenance)
    write_csv(test_ds, out / TEST_FILE, provenance)
    manifest = DatasetManifest(
        seed=gen.seed,
        n_train=gen.n_train,
        n_test=gen.n_test,
        l_in=gen.l_in,
        l_out=gen.l_out,
        delta_max=gen.delta_max,
        eps_max=gen.eps_max,
        norm_stats=train_ds.norm_stats,
        config=provenance,
    )
    (out / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    print(f"{out / TRAIN_FILE}: {len(train_ds)} échantillons")
    print(f"{out / TEST_FILE}: {len(test_ds)} échantillons")
    return EXIT_OK


def cmd_describe(args: argparse.Namespace, config: CliConfig) -> int:
    descriptions = [describe_dataset(_load_split(config, split.value)).model_dump(mode="json") for split in Split]
    out = Path(config.output_dir) / "dataset_description.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"splits": descriptions, "config": _provenance(config)}
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    for d in descriptions:
        logger.info(
            f"{d['split']}: {d['num_samples']} échantillons, σy [{d['yield_stress']['min']:.2f}, "
            f"{d['yield_stress']['max']:.2f}] MPa, n [{d['hardening_exponent']['min']:.4f}, "
            f"{d['hardening_exponent']['max']:.4f}], t [{d['thickness']['min']:.3f}, {d['thickness']['max']:.3f}] mm"
        )
    print(json.dumps(descriptions, indent=2))
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: CliConfig) -> int:
    train_ds = _load_split(config, Split.TRAIN.value)
    provenance = _provenance(config)
    ckpt, history = train(train_ds, config.train, config.max_train_samples, provenance)
    out = Path(config.output_dir)
    tag = config.train.model_tag
    ckpt_path = save_checkpoint(ckpt, out / f"{tag}.ckpt")
    loss_path = write_loss_history(history, out / f"{tag}_loss.csv", provenance)
    print(f"checkpoint: {ckpt_path}")
    print(f"historique: {loss_path}")
    print(f"perte finale: {history[-1]:.6e}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: CliConfig) -> int:
    ckpt = _load_checkpoint(config)
    ds = _load_split(config, args.split)
    provenance = _provenance(config)
    report, predictions = evaluate_detailed(ckpt, ds, provenance)
    out = Path(config.output_dir)
    report_path, samples_path = write_report(report, out / f"report_{report.model_tag}_{args.split}.json")

    if args.plot_extremes:
        for label, position in extreme_samples(report).items():
            pair = ds[position]
            emit_plot(
                pair,
                predictions[position],
                out / "plots" / f"{report.model_tag}_{args.split}_{label}_{pair.sample_id:04d}",
                provenance,
            )

    print(f"rapport: {report_path} ({samples_path.name})")
    for key, value in report.aggregates().items():
        print(f"{key}: {value:.6g}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, config: CliConfig) -> int:
    ckpt = _load_checkpoint(config)
    ds = _load_split(config, args.split)
    check_grid(ckpt, ds)
    pair = _sample(ds, args.index)
    pred = predict_curves(ckpt, [pair])[0]
    out = Path(config.output_dir) / f"prediction_{args.split}_{pair.sample_id:04d}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({
        "strain": [repr(float(v)) for v in pair.strain_grid],
        "pred_stress": [repr(float(v)) for v in pred],
    }).to_csv(out, index=False, lineterminator="\n")
    print(f"prédiction: {out} ({len(pred)} points)")
    return EXIT_OK


def cmd_export_gaf(args: argparse.Namespace, config: CliConfig) -> int:
    ds = _load_split(config, args.split)
    if args.index is not None:
        _sample(ds, args.index)
        positions: List[int] = [args.index]
    else:
        positions = list(range(len(ds) if args.limit is None else min(args.limit, len(ds))))
    out = Path(config.output_dir) / "gaf" / args.split
    for position in positions:
        pair = ds[position]
        img = gaf_service.transform(pair.load, strict=False)
        stem = f"gaf_{pair.sample_id:04d}"
        gaf_service.export(img, out / f"{stem}.pgm", "pgm")
        gaf_service.export(img, out / f"{stem}.csv", "csv")
    (out / "export.json").write_text(
        json.dumps({"samples": [ds[p].sample_id for p in positions], "config": _provenance(config)}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"{len(positions)} image(s) GAF exportée(s) dans {out}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, config: CliConfig) -> int:
    ckpt = _load_checkpoint(config)
    ds = _load_split(config, args.split)
    check_grid(ckpt, ds)
    pair = _sample(ds, args.index)
    pred = predict_curves(ckpt, [pair])[0]
    base = Path(config.output_dir) / "plots" / f"{ckpt.config.model_tag}_{args.split}_{pair.sample_id:04d}"
    written = emit_plot(pair, pred, base, _provenance(config))
    for path in written:
        print(path)
    return EXIT_OK


def cmd_plot_dataset(args: argparse.Namespace, config: CliConfig) -> int:
    ds = _load_split(config, args.split)
    path = emit_dataset_overview(ds, Path(config.output_dir) / f"dataset_{args.split}.png")
    print(path)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: CliConfig) -> int:
    reports = [(str(path), read_report(path)) for path in args.reports]
    table = compare_reports(reports)
    json_path, csv_path = write_comparison(table, Path(config.output_dir) / "comparison.json")
    header = f"{'modèle':<14}{'MAE max':>12}{'MAE min':>12}{'R² max':>10}{'R² min':>10}  source"
    print(header)
    for row in table.rows:
        print(
            f"{row.model_tag:<14}{row.max_mae:>12.4f}{row.min_mae:>12.4f}"
            f"{row.max_r2:>10.4f}{row.min_r2:>10.4f}  {row.source}"
        )
    print(f"comparaison: {json_path} / {csv_path.name}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, CliConfig], int]] = {
    "generate": cmd_generate,
    "describe": cmd_describe,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "export-gaf": cmd_export_gaf,
    "plot": cmd_plot,
    "plot-dataset": cmd_plot_dataset,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------------------
# Point d'entrée
# ---------------------------------------------------------------------------


def _validation_messages(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(x) for x in error['loc'])}: {error['msg']}" for error in exc.errors()
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Exécute une commande et retourne le code de sortie.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse: 2 pour une erreur d'utilisation, 0 pour --help
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    setup_logging(
        log_level=(args.log_level or settings.LOG_LEVEL).upper(),
        log_file=args.log_file,
        rotation=settings.LOG_ROTATION,
        retention=settings.LOG_RETENTION,
    )
    logger.debug(f"{settings.APP_NAME} v{settings.APP_VERSION} - commande {args.command}")

    try:
        config = config_from_args(args)
        return COMMANDS[args.command](args, config)
    except ValidationError as exc:
        logger.error(f"Configuration invalide: {_validation_messages(exc)}")
        return EXIT_USAGE
    except ConfigurationError as exc:
        logger.error(f"Configuration invalide: {exc}")
        return EXIT_USAGE
    except (SptError, OSError) as exc:
        logger.error(f"Échec de la commande {args.command}: {exc}")
        return EXIT_RUNTIME
    except Exception as exc:
        logger.exception(f"Erreur non gérée: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
