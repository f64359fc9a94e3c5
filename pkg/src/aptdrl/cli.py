"""aptdrl command line: synth, ingest, prepare, train, evaluate, baselines.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DISPLAY_NAMES, KINDS, benchmark, fit
from .config import ConfigError, RunConfig, load_config, parse_assignment
from .data import read_dataset_csv, read_split_csv, write_dataset_csv
from .dqn import load_checkpoint, save_checkpoint, train, write_history
from .env import AttributionEnv
from .errors import AptError, DimensionMismatch
from .ingest import ApiVocabulary, ingest_corpus
from .metrics import EvalLog, emit_reports, evaluate_policy, write_comparison
from .pipeline import prepare, read_metadata, read_prepared, write_prepared
from .synthgen import generate_features, generate_reports

log = logging.getLogger("aptdrl")

DRL_ROW = "DRL (DQN)"


def _write_meta(path: Path, command: str, cfg: RunConfig, **extra) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {
            "seed": cfg.seed,
            "split": cfg.split_seed,
            "smote": cfg.smote_seed,
            "env": cfg.env_seed,
            "train": cfg.train_seed,
            "baselines": cfg.baseline_seed,
        },
    }
    meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _meta_beside(out_file: Path) -> Path:
    return out_file.with_name(out_file.stem + ".run_meta.json")


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise AptError(f"{what} not found: {path}")


def cmd_synth(args, cfg: RunConfig) -> None:
    out = Path(args.out_dir)
    synth = cfg.synth_config()
    if args.kind == "reports":
        corpus = generate_reports(synth, out)
        log.info("wrote %d samples (%d report documents) to %s", len(corpus.ground_truth), 3 * len(corpus.ground_truth), out)
    else:
        out.mkdir(parents=True, exist_ok=True)
        blobs = generate_features(synth)
        write_dataset_csv(blobs.dataset, out / "dataset.csv")
        np.savetxt(out / "centers.csv", blobs.centers, delimiter=",", fmt="%.17g")
        log.info("wrote %d samples to %s", len(blobs.dataset), out / "dataset.csv")
    _write_meta(out / "run_meta.json", "synth", cfg, kind=args.kind)


def cmd_ingest(args, cfg: RunConfig) -> None:
    manifest, reports, out = Path(args.manifest), Path(args.reports), Path(args.out)
    _require_file(manifest, "manifest")
    vocab = None
    if args.vocab:
        _require_file(Path(args.vocab), "vocabulary")
        try:
            vocab = ApiVocabulary.from_json(Path(args.vocab).read_text(encoding="utf-8"))
        except (ValueError, KeyError) as exc:
            raise AptError(f"bad vocabulary file {args.vocab}: {exc}") from None
    dataset, vocab = ingest_corpus(manifest, reports, cfg.top_n, vocab)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(dataset, out)
    out.with_name(out.stem + ".vocab.json").write_text(vocab.to_json(), encoding="utf-8")
    _write_meta(_meta_beside(out), "ingest", cfg, manifest=str(manifest), reports=str(reports), rows=len(dataset), dim=dataset.dim)
    log.info("assembled %d records with %d features", len(dataset), dataset.dim)


def cmd_prepare(args, cfg: RunConfig) -> None:
    src = Path(args.input)
    _require_file(src, "dataset")
    dataset = read_dataset_csv(src)
    prep = prepare(dataset, cfg.split_config(), cfg.smote_config(), cfg.paper_order)
    out = Path(args.out_dir)
    write_prepared(prep, out)
    _write_meta(out / "run_meta.json", "prepare", cfg, input=str(src))
    log.info("train %s / test %s", prep.train.class_counts().tolist(), prep.test.class_counts().tolist())


def _progress(row) -> None:
    log.info("step %d eps=%.3f lr=%.2e loss=%.4f train=%.4f test=%.4f", row.step, row.epsilon, row.lr, row.loss, row.train_acc, row.test_acc)


def cmd_train(args, cfg: RunConfig) -> None:
    train_split, test_split, meta = read_prepared(args.splits)
    k, d = train_split.num_classes, train_split.dim
    hp = cfg.hyperparams()
    config = cfg.network_config(d, k)
    policy = target = None
    start = 0
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if (ckpt.config.input_dim, ckpt.config.output_dim) != (d, k):
            raise DimensionMismatch(f"checkpoint is {ckpt.config.input_dim}->{ckpt.config.output_dim}, splits are {d}->{k}")
        config, policy, target, start = ckpt.config, ckpt.policy, ckpt.target, ckpt.step
    env = AttributionEnv(train_split, cfg.reward_scheme(), cfg.episode_schedule())
    eval_env = AttributionEnv(test_split, cfg.reward_scheme())
    result = train(env, eval_env, hp, config, policy, target, start, progress=_progress)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, config, hp, result.policy, result.target, result.steps, {"classes": train_split.classes})
    log_path = Path(args.log)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    write_history(result.history, log_path)
    report_dir = Path(args.report_dir) if args.report_dir else log_path.parent / "eval"
    if result.eval_log:
        _, cm = evaluate_policy(result.policy, config, test_split)
        emit_reports(result.eval_log, cm, report_dir, train_split.classes)
    _write_meta(_meta_beside(out), "train", cfg, splits=str(args.splits), steps=result.steps, resumed_from=args.resume)


def cmd_evaluate(args, cfg: RunConfig) -> None:
    model, split_path = Path(args.model), Path(args.split)
    _require_file(split_path, "split")
    ckpt = load_checkpoint(model)
    meta_path = split_path.parent / "metadata.json"
    classes = read_metadata(meta_path).get("classes") if meta_path.is_file() else ckpt.extra.get("classes")
    split = read_split_csv(split_path, classes)
    acc, cm = evaluate_policy(ckpt.policy, ckpt.config, split)
    names = list(classes) if classes else [str(c) for c in range(ckpt.config.output_dim)]
    names += [str(c) for c in range(len(names), ckpt.config.output_dim)]
    elog = EvalLog()
    elog.add(ckpt.step, split_path.stem, cm)
    out = Path(args.out_dir)
    emit_reports(elog, cm, out, names)
    _write_meta(out / "run_meta.json", "evaluate", cfg, model=str(model), split=str(split_path), accuracy=acc)
    log.info("accuracy %.4f on %d samples", acc, len(split))


def cmd_baselines(args, cfg: RunConfig) -> None:
    train_split, test_split, _ = read_prepared(args.splits)
    options = {
        "sgd-linear": {"epochs": cfg.sgd_epochs},
        "knn": {"k": cfg.knn_k},
        "decision-tree": {},
        "mlp": {"hidden": tuple(cfg.mlp_hidden), "epochs": cfg.mlp_epochs},
    }
    models = {DISPLAY_NAMES[kind]: fit(kind, train_split, cfg.baseline_seed, **options[kind]) for kind in KINDS}
    extra = {}
    if args.model:
        ckpt = load_checkpoint(args.model)
        extra[DRL_ROW] = evaluate_policy(ckpt.policy, ckpt.config, test_split)[0]
    table = benchmark(models, test_split, extra)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_comparison(table.rows, out, out.with_suffix(".txt"))
    _write_meta(_meta_beside(out), "baselines", cfg, splits=str(args.splits), model=args.model)
    sys.stdout.write(out.with_suffix(".txt").read_text(encoding="utf-8"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key/value run configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aptdrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", choices=("reports", "features"), default="reports")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse reports into a dataset CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--reports", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", help="reuse an existing vocabulary sidecar")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prepare", parents=[common], help="encode, split, oversample and scale")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train the DQN attribution agent")
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", required=True, help="training log CSV")
    p.add_argument("--report-dir", help="evaluation CSV directory (default: <log dir>/eval)")
    p.add_argument("--resume", help="continue from a checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baselines", parents=[common], help="fit classical baselines and compare")
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="DQN checkpoint to add as a row")
    p.set_defaults(func=cmd_baselines)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = dict(parse_assignment(s) for s in args.set)
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"aptdrl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        args.func(args, cfg)
    except (AptError, OSError) as exc:
        print(f"aptdrl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
