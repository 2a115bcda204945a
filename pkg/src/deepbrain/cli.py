"""Command-line entry point: ``deepbrain <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    COMPARISON_COLUMNS,
    BenchmarkSettings,
    benchmark_datasets,
    compare_models,
    preprocess_dataset,
)
from .checkpoint import Checkpoint
from .errors import DataError, DeepBrainError, TrainingError
from .evaluation import SIMILARITY_COLUMNS, auc, classification_metrics, roc_curve, similarity_matrix
from .network import ModelConfig, ModelKind, init_params, predict_proba
from .preprocess import TRAINING_PREPROCESS, PreprocessConfig
from .signal_model import Dataset, LabelClass, read_sessions_jsonl, split_dataset, write_sessions_jsonl
from .stream_infer import DEFAULT_COMMANDS, StreamConfig, log_line, run_stream
from .synthgen import GenSpec, generate_dataset
from .training import TrainConfig, finite_diff_grad, loss_and_grads, relative_errors, train_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PROB_COLUMNS = [f"p_{c.key}" for c in LabelClass]

log = logging.getLogger("deepbrain")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, seeds: dict, inputs=()) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def manifest_path(out) -> Path:
    out = Path(out)
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _load_sessions(path) -> Dataset:
    try:
        sessions = read_sessions_jsonl(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not sessions:
        raise DataError(f"{path} contains no sessions")
    return Dataset(tuple(sessions), {"path": str(path)})


def _preprocess_config(args) -> PreprocessConfig:
    return TRAINING_PREPROCESS if args.norm == "scale" else PreprocessConfig()


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = GenSpec(sessions_per_class=args.classes_per)
    data = generate_dataset(spec, noisy=args.noisy, seed=args.seed)
    write_sessions_jsonl(data, args.out)
    write_manifest(manifest_path(args.out), "gen",
                   {"gen_spec": spec.to_dict(), "noisy": args.noisy,
                    "rng": "numpy PCG64, SeedSequence([seed, noisy, index])"},
                   {"master_seed": args.seed})
    print(f"wrote {len(data)} sessions to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    pre = _preprocess_config(args)
    windows = preprocess_dataset(_load_sessions(args.data), pre)
    inputs = [args.data]
    if args.valid:
        train, valid = windows, preprocess_dataset(_load_sessions(args.valid), pre)
        inputs.append(args.valid)
    else:
        train, valid = split_dataset(windows, 1.0 - args.valid_fraction, args.seed)
    config = ModelConfig.for_kind(args.model)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, seed=args.seed,
                       lr=args.lr, clip_norm=args.clip_norm)
    ckpt, history = train_model(config, tcfg, train, valid, pre)
    out = Path(args.out)
    ckpt.save(out)
    stem = out.with_suffix("")
    _write_csv(f"{stem}.history.csv",
               ["epoch", "loss", "train_accuracy", "valid_accuracy", "steps"],
               [[r.epoch, repr(r.loss), repr(r.train_accuracy), repr(r.valid_accuracy), r.steps]
                for r in history])
    from .plotting import plot_history
    plot_history(history, f"{stem}.history.svg", title=f"{config.kind.value} training")
    write_manifest(manifest_path(out), "train",
                   {"model_config": config.to_dict(), "preprocess_config": pre.to_dict(),
                    "train_config": {"epochs": tcfg.epochs, "batch_size": tcfg.batch_size,
                                     "lr": tcfg.learning_rate, "clip_norm": tcfg.clip_norm,
                                     "valid_fraction": None if args.valid else args.valid_fraction}},
                   {"seed": args.seed}, inputs)
    best = ckpt.provenance["best_epoch"]
    print(f"trained {config.kind.value}: best epoch {best}, "
          f"valid accuracy {history[best].valid_accuracy:.4f}; checkpoint {out}")
    return EXIT_OK


def _read_predictions(path):
    labels, probs = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"label", *PROB_COLUMNS} - set(reader.fieldnames or ())
            if missing:
                raise DataError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                labels.append(LabelClass.from_key(row["label"]))
                probs.append([float(row[c]) for c in PROB_COLUMNS])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: {exc}") from exc
    if not labels:
        raise DataError(f"{path} contains no predictions")
    return np.array([int(l) for l in labels]), np.array(probs)


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.predictions:
        labels, probs = _read_predictions(args.predictions)
        inputs = [args.predictions]
    else:
        if not (args.checkpoint and args.data):
            raise UsageError("eval needs --predictions, or both --checkpoint and --data")
        ckpt = Checkpoint.load(args.checkpoint)
        windows = preprocess_dataset(_load_sessions(args.data), ckpt.preprocess_config)
        X, Y = windows.arrays()
        probs = predict_proba(ckpt.model_config, ckpt.params, X)
        labels = Y.argmax(axis=1)
        inputs = [args.checkpoint, args.data]
        _write_csv(out / "predictions.csv", ["label", *PROB_COLUMNS],
                   [[LabelClass(int(l)).key, *map(repr, map(float, p))]
                    for l, p in zip(labels, probs)])
    preds = probs.argmax(axis=1)
    report = classification_metrics(preds, labels, probs)

    (out / "metrics.json").write_text(json.dumps(report.to_json(), indent=1) + "\n",
                                      encoding="utf-8")
    rows = []
    for cls, m in report.per_class.items():
        rows.append([cls.key, m.precision, m.recall, m.f1, m.tpr, m.fpr, m.auc, m.support])
    rows.append(["weighted", *[report.weighted[k] for k in ("precision", "recall", "f1")],
                 None, None, report.micro_auc, len(labels)])
    rows.append(["macro", *[report.macro[k] for k in ("precision", "recall", "f1")],
                 None, None, None, len(labels)])
    _write_csv(out / "metrics.csv",
               ["class", "precision", "recall", "f1", "tpr", "fpr", "auc", "support"],
               [[_fmt(v) for v in r] for r in rows])
    _write_csv(out / "summary.csv", COMPARISON_COLUMNS,
               [["model", *[_fmt(v) for v in report.headline().values()]]])

    curves = {}
    onehot = np.eye(len(LabelClass), dtype=bool)[labels]
    targets = [(c.key, probs[:, int(c)], onehot[:, int(c)]) for c in LabelClass]
    targets.append(("micro", probs.ravel(), onehot.ravel()))
    for name, scores, mask in targets:
        if not mask.any() or mask.all():
            continue
        curve = roc_curve(scores, mask)
        _write_csv(out / f"roc_{name}.csv", ["threshold", "fpr", "tpr"],
                   [[repr(float(t)), repr(float(f)), repr(float(p))]
                    for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr)])
        curves[name] = (curve, auc(curve))
    from .plotting import plot_roc
    plot_roc(curves, out / "roc.svg")
    write_manifest(out / "manifest.json", "eval", {"n": int(len(labels))}, {}, inputs)
    print(f"accuracy {report.accuracy:.4f}; wrote {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    settings = BenchmarkSettings(sessions_per_class=args.classes_per, dataset_seed=args.dataset_seed,
                                 epochs=args.epochs, batch_size=args.batch)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    unknown = set(conditions) - {"quiet", "noisy"}
    if unknown:
        raise UsageError(f"unknown condition(s): {sorted(unknown)}")
    provided = {"quiet": args.quiet_data, "noisy": args.noisy_data}
    generated = None
    datasets, inputs = {}, []
    for cond in conditions:
        if provided[cond]:
            datasets[cond] = _load_sessions(provided[cond])
            inputs.append(provided[cond])
        else:
            generated = generated or benchmark_datasets(settings)
            datasets[cond] = generated[cond]
    try:
        kinds = [ModelKind(k.strip()) for k in args.models.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = compare_models(kinds, datasets, args.seeds, settings)

    from .plotting import plot_comparison
    for cond, rows in table.rows.items():
        _write_csv(out / f"compare_{cond}.csv", COMPARISON_COLUMNS,
                   [[_fmt(r[c]) for c in COMPARISON_COLUMNS] for r in rows])
        plot_comparison(rows, out / f"compare_{cond}.svg", title=f"{cond} condition")
    (out / "compare.json").write_text(json.dumps(table.to_json(), indent=1) + "\n",
                                      encoding="utf-8")
    write_manifest(out / "manifest.json", "compare",
                   {"benchmark": settings.to_dict(), "models": [k.value for k in kinds],
                    "conditions": conditions, "aggregation": "mean over seeds"},
                   {"seeds": table.seeds, "dataset_seed": settings.dataset_seed}, inputs)
    for cond, rows in table.rows.items():
        print(f"[{cond}]")
        for r in rows:
            print("  " + "  ".join(f"{c}={r[c]:.3f}" if c != "method" else f"{r[c]:<13}"
                                   for c in COMPARISON_COLUMNS))
    return EXIT_OK


def cmd_similarity(args) -> int:
    data = _load_sessions(args.data)
    sim = similarity_matrix(data.items, args.pairs, args.seed)
    rows = sim.rows()
    _write_csv(args.out, SIMILARITY_COLUMNS, [[_fmt(r[c]) for c in SIMILARITY_COLUMNS] for r in rows])
    from .plotting import plot_similarity
    plot_similarity(sim, Path(args.out).with_suffix(".svg"))
    write_manifest(manifest_path(args.out), "similarity", {"pairs": args.pairs},
                   {"seed": args.seed}, [args.data])
    print(f"wrote {args.out}")
    return EXIT_OK


def _parse_map(items) -> dict:
    commands = dict(DEFAULT_COMMANDS)
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--map expects class=command, got {item!r}")
        key, cmd = item.split("=", 1)
        try:
            commands[LabelClass.from_key(key.strip())] = cmd
        except DataError as exc:
            raise UsageError(str(exc)) from None
    return commands


def cmd_infer(args) -> int:
    cfg = StreamConfig(stride=args.stride, smoothing=args.smooth, commands=_parse_map(args.map))
    ckpt = Checkpoint.load(args.checkpoint)
    out = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout
    src = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    try:
        def emit(entry):
            out.write(log_line(entry) + "\n")
            out.flush()

        result = run_stream(src, ckpt, cfg, on_entry=emit)
    finally:
        if src is not sys.stdin:
            src.close()
        if out is not sys.stdout:
            out.close()
    print(result.summary(), file=sys.stderr)
    return EXIT_OK


def gradcheck(kind, h: float = 1e-5, seed: int = 0) -> dict:
    """Tiny-fixture BPTT vs central-difference comparison; returns per-parameter errors."""
    config = ModelConfig.for_kind(kind, embed_widths=(2, 2), lstm_hidden=3, mlp_hidden=3,
                                  seq_len=5)
    params = init_params(config, seed)
    rng = np.random.default_rng(seed + 1)
    X = rng.uniform(0.0, 1.0, size=(3, 5, 1))
    Y = np.eye(4)[rng.integers(0, 4, size=3)]
    _, analytic = loss_and_grads(config, params, X, Y, seed=seed + 2)
    numeric = finite_diff_grad(config, params, X, Y, h=h, seed=seed + 2)
    return relative_errors(analytic, numeric)


def cmd_gradcheck(args) -> int:
    kinds = list(ModelKind) if args.model == "all" else [ModelKind(args.model)]
    ok = True
    for kind in kinds:
        start = time.perf_counter()
        errs = gradcheck(kind, h=args.h, seed=args.seed)
        worst = max(errs, key=errs.get)
        passed = errs[worst] < args.tol
        ok &= passed
        print(f"{kind.value:<10} {'PASS' if passed else 'FAIL'}  worst {worst} "
              f"rel_err={errs[worst]:.3e}  ({time.perf_counter() - start:.2f}s)")
    return EXIT_OK if ok else EXIT_NUMERIC


# -- parser -------------------------------------------------------------------

def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepbrain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    models = [k.value for k in ModelKind]

    p = sub.add_parser("gen", help="generate a synthetic session dataset (JSONL)")
    p.add_argument("--classes-per", type=int, default=200)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--valid", help="separate validation JSONL (default: split from --data)")
    p.add_argument("--valid-fraction", type=float, default=0.125)
    p.add_argument("--model", choices=models, default="deepbrain")
    p.add_argument("--epochs", type=int, default=BenchmarkSettings.epochs)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--norm", choices=["scale", "session"], default="scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics, ROC CSVs and plot")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--predictions", help="CSV with label and p_<class> columns")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train and compare model kinds on quiet/noisy data")
    p.add_argument("--models", default=",".join(models[::-1]))
    p.add_argument("--seeds", type=_seed_list, default=[1, 2, 3])
    p.add_argument("--conditions", default="quiet,noisy")
    p.add_argument("--classes-per", type=int, default=200)
    p.add_argument("--dataset-seed", type=int, default=BenchmarkSettings.dataset_seed)
    p.add_argument("--quiet-data")
    p.add_argument("--noisy-data")
    p.add_argument("--epochs", type=int, default=BenchmarkSettings.epochs)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("similarity", help="Spearman self/cross similarity table")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("infer", help="streaming inference from one number per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--log")
    p.add_argument("--stride", type=int, default=30)
    p.add_argument("--smooth", type=int, default=3)
    p.add_argument("--map", action="append", metavar="CLASS=COMMAND")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gradcheck", help="BPTT vs finite differences on a tiny fixture")
    p.add_argument("--model", choices=models + ["all"], default="all")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"deepbrain {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError) as exc:
        print(f"deepbrain {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DeepBrainError, OSError) as exc:
        print(f"deepbrain {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
