"""Command-line entry points: synth, train, eval, gradcheck.

Exit codes are a stable contract: 0 success, 1 check failure,
2 usage or input error. All structured output is JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    LabelSet,
    load_embeddings,
    load_labels,
    save_embeddings,
    save_labels,
    split,
)
from .encoder import Variant
from .errors import ConfigError, LimnetError
from .gradcheck import run_gradcheck
from .modelfile import load_model, save_model
from .synthetic import SyntheticConfig, gen_synthetic, split_fractions
from .training import RNG_NAME, TrainConfig, TrainData, evaluate, train

MANIFEST_NAME = "manifest.json"
SPLIT_NAMES = ("train", "val", "test")


def _load_config_file(path: str | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {path}")
    return raw


def _merge(file_cfg: dict, flags: dict, defaults: dict) -> dict:
    # precedence: flag > config file > default
    out = dict(defaults)
    out.update(file_cfg)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _int_tuple(text: str, name: str, count: int) -> tuple[int, ...]:
    try:
        parts = tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"{name} must be {count} comma-separated integers, got {text!r}") from exc
    if len(parts) != count:
        raise ConfigError(f"{name} must have {count} entries, got {len(parts)}")
    return parts


def _as_pair_or_triple(value, name: str, count: int) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigError(f"{name} must have {count} entries, got {len(value)}")
        return tuple(int(v) for v in value)
    return _int_tuple(value, name, count)


SYNTH_KEYS = {
    "dim",
    "docs_per_split",
    "sentences_per_doc",
    "tokens_per_sentence",
    "noise_sigma",
    "clusters",
    "topics",
    "seed",
}


def cmd_synth(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config, SYNTH_KEYS)
    defaults = {
        "dim": 16,
        "docs_per_split": (200, 50, 50),
        "sentences_per_doc": (4, 8),
        "tokens_per_sentence": (3, 6),
        "noise_sigma": 0.1,
        "clusters": 2,
        "topics": 2,
        "seed": 0,
    }
    flags = {
        "dim": args.dim,
        "docs_per_split": args.docs,
        "sentences_per_doc": args.sentences,
        "tokens_per_sentence": args.tokens,
        "noise_sigma": args.noise,
        "clusters": args.clusters,
        "topics": args.topics,
        "seed": args.seed,
    }
    merged = _merge(file_cfg, flags, defaults)
    cfg = SyntheticConfig(
        dim=int(merged["dim"]),
        docs_per_split=_as_pair_or_triple(merged["docs_per_split"], "docs_per_split", 3),
        sentences_per_doc=_as_pair_or_triple(merged["sentences_per_doc"], "sentences_per_doc", 2),
        tokens_per_sentence=_as_pair_or_triple(
            merged["tokens_per_sentence"], "tokens_per_sentence", 2
        ),
        noise_sigma=float(merged["noise_sigma"]),
        clusters=int(merged["clusters"]),
        topics=int(merged["topics"]),
        seed=int(merged["seed"]),
    )
    corpus, labels = gen_synthetic(cfg)
    parts = split(corpus, split_fractions(cfg), cfg.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": 1,
        "task": labels.task,
        "num_classes": labels.num_classes,
        "config": {
            "dim": cfg.dim,
            "docs_per_split": list(cfg.docs_per_split),
            "sentences_per_doc": list(cfg.sentences_per_doc),
            "tokens_per_sentence": list(cfg.tokens_per_sentence),
            "noise_sigma": cfg.noise_sigma,
            "clusters": cfg.clusters,
            "topics": cfg.topics,
            "seed": cfg.seed,
        },
        "splits": {},
    }
    for name, part in zip(SPLIT_NAMES, parts):
        emb_name = f"{name}.limd"
        lab_name = f"{name}.labels.jsonl"
        save_embeddings(part, out_dir / emb_name)
        part_labels = LabelSet(
            task=labels.task,
            num_classes=labels.num_classes,
            by_doc={d.doc_id: labels.by_doc[d.doc_id] for d in part.docs},
        )
        save_labels(part_labels, out_dir / lab_name)
        sents = sum(d.num_sentences for d in part.docs)
        toks = sum(sum(d.sentence_lengths) for d in part.docs)
        manifest["splits"][name] = {
            "embeddings": emb_name,
            "labels": lab_name,
            "docs": len(part.docs),
            "sentences": sents,
            "tokens": toks,
        }
        print(f"{name}: {len(part.docs)} docs, {sents} sentences, {toks} tokens")
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {out_dir / MANIFEST_NAME}")
    return 0


def _merge_labels(parts: list[LabelSet]) -> LabelSet:
    first = parts[0]
    merged = LabelSet(task=first.task, num_classes=first.num_classes)
    for ls in parts:
        if ls.task != first.task or ls.num_classes != first.num_classes:
            raise ConfigError("label files disagree on task or num_classes")
        merged.by_doc.update(ls.by_doc)
    return merged


def _load_train_data(args: argparse.Namespace) -> tuple[TrainData, dict]:
    path = Path(args.data)
    if path.is_dir():
        if args.labels is not None:
            raise ConfigError("--labels cannot be combined with a manifest directory")
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ConfigError(f"no {MANIFEST_NAME} in {path}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        corpora = []
        label_parts = []
        for name in SPLIT_NAMES:
            entry = manifest["splits"][name]
            corpora.append(load_embeddings(path / entry["embeddings"]))
            label_parts.append(load_labels(path / entry["labels"]))
        labels = _merge_labels(label_parts)
        data = TrainData(*corpora, labels=labels)
        echo = {"data": str(path), "labels": None, "split_fractions": None, "split_seed": None}
    else:
        if args.labels is None:
            raise ConfigError("--labels is required when --data is a single embedding file")
        corpus = load_embeddings(path)
        labels = load_labels(args.labels)
        try:
            fracs = tuple(
                float(v) for v in str(args.split_fractions).replace(" ", "").split(",")
            )
        except ValueError as exc:
            raise ConfigError(
                f"split_fractions must be comma-separated numbers, got {args.split_fractions!r}"
            ) from exc
        train_c, val_c, test_c = split(corpus, fracs, args.split_seed)
        data = TrainData(train_c, val_c, test_c, labels=labels)
        echo = {
            "data": str(path),
            "labels": str(args.labels),
            "split_fractions": list(fracs),
            "split_seed": args.split_seed,
        }
    return data, echo


TRAIN_KEYS = {
    "task",
    "variant",
    "learning_rate",
    "epochs",
    "dropout_rate",
    "seed",
    "hidden_size",
    "head_hidden",
    "grad_accum",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
}


def _build_train_config(args: argparse.Namespace, task: str) -> TrainConfig:
    file_cfg = _load_config_file(args.config, TRAIN_KEYS)
    defaults = {
        "task": task,
        "variant": "full",
        "learning_rate": None,
        "epochs": 100,
        "dropout_rate": 0.5,
        "seed": 0,
        "hidden_size": 256,
        "head_hidden": (),
        "grad_accum": 1,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
    }
    flags = {
        "task": args.task,
        "variant": args.variant,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "dropout_rate": args.dropout,
        "seed": args.seed,
        "hidden_size": args.hidden,
        "head_hidden": args.head_hidden,
        "grad_accum": args.grad_accum,
        "adam_beta1": args.adam_beta1,
        "adam_beta2": args.adam_beta2,
        "adam_eps": args.adam_eps,
    }
    merged = _merge(file_cfg, flags, defaults)
    if merged["task"] != task:
        raise ConfigError(
            f"configured task {merged['task']!r} does not match label files ({task!r})"
        )
    head_hidden = merged["head_hidden"]
    if isinstance(head_hidden, str):
        text = head_hidden.replace(" ", "")
        if text in ("", "none"):
            head_hidden = ()
        else:
            try:
                head_hidden = tuple(int(v) for v in text.split(","))
            except ValueError as exc:
                raise ConfigError(f"head_hidden must be comma-separated integers, got {text!r}") from exc
    else:
        head_hidden = tuple(int(v) for v in head_hidden)
    try:
        variant = Variant(merged["variant"])
    except ValueError as exc:
        raise ConfigError(
            f"unknown variant {merged['variant']!r}; pick one of "
            f"{', '.join(v.value for v in Variant)}"
        ) from exc
    lr = merged["learning_rate"]
    cfg = TrainConfig(
        task=merged["task"],
        variant=variant,
        learning_rate=None if lr is None else float(lr),
        epochs=int(merged["epochs"]),
        dropout_rate=float(merged["dropout_rate"]),
        seed=int(merged["seed"]),
        hidden_size=int(merged["hidden_size"]),
        head_hidden=head_hidden,
        grad_accum=int(merged["grad_accum"]),
        adam_beta1=float(merged["adam_beta1"]),
        adam_beta2=float(merged["adam_beta2"]),
        adam_eps=float(merged["adam_eps"]),
    )
    cfg.validate()
    return cfg


def cmd_train(args: argparse.Namespace) -> int:
    data, echo = _load_train_data(args)
    cfg = _build_train_config(args, data.labels.task)
    echo.update({"num_classes": data.labels.num_classes, "dim": data.train.dim})
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")
    out_path = Path(args.out)
    if args.seeds == 1:
        result = train(data, cfg)
        result.log.config.update(echo)
        out_path.write_text(result.log.to_json(), encoding="utf-8")
        if args.save_model:
            save_model(result.best, cfg.variant, cfg.task, args.save_model)
        rec = result.log.epochs[-1]
        print(
            f"epoch {rec['epoch']}: train_loss {rec['train_loss']:.6f} "
            f"val_loss {rec['val_loss']:.6f} val_micro_f1 {rec['val_micro_f1']:.4f}"
        )
        print(f"best val epoch {result.log.best_val_epoch}; test {result.log.test}")
        print(f"wrote {out_path}")
        return 0

    if args.save_model:
        raise ConfigError("--save-model requires a single-seed run")
    runs = []
    for s in range(cfg.seed, cfg.seed + args.seeds):
        seed_cfg = TrainConfig(**{**cfg.__dict__, "seed": s})
        result = train(data, seed_cfg)
        result.log.config.update(echo)
        runs.append(result.log.to_dict())
        print(
            f"seed {s}: best val epoch {result.log.best_val_epoch}, "
            f"test micro_f1 {result.log.test['micro_f1']:.4f}"
        )
    summary = {}
    for key in ("test", "test_final"):
        summary[key] = {
            metric: {
                "mean": float(np.mean([r[key][metric] for r in runs])),
                "std": float(np.std([r[key][metric] for r in runs])),
            }
            for metric in ("macro_p", "macro_r", "macro_f1", "micro_f1")
        }
    aggregate = {
        "schema_version": 1,
        "rng": RNG_NAME,
        "seeds": list(range(cfg.seed, cfg.seed + args.seeds)),
        "runs": runs,
        "summary": summary,
    }
    out_path.write_text(json.dumps(aggregate, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    mf = summary["test"]["macro_f1"]
    print(f"test macro_f1 over {args.seeds} seeds: {mf['mean']:.4f} +/- {mf['std']:.4f}")
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    corpus = load_embeddings(args.data)
    labels = load_labels(args.labels)
    labels.validate_against(corpus)
    model, variant, task = load_model(args.params)
    if task != labels.task:
        raise ConfigError(f"model was trained for task {task!r}, labels are {labels.task!r}")
    if model.encoder.dim != corpus.dim:
        raise ConfigError(
            f"model dim {model.encoder.dim} does not match data dim {corpus.dim}"
        )
    if model.head.num_classes != labels.num_classes:
        raise ConfigError(
            f"model has {model.head.num_classes} classes, labels declare {labels.num_classes}"
        )
    res = evaluate(corpus.docs, labels, model, variant)
    text = json.dumps(res, sort_keys=True, indent=2) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck(
        trials=args.trials,
        eps=args.eps,
        tol=args.tol,
        seed=args.seed,
        grad_scale=args.grad_scale,
    )
    print(
        f"gradcheck: {report.trials} trials, max relative error {report.max_rel_err:.3e} "
        f"({report.recheck_count} extended-precision rechecks, {report.elapsed_s:.1f}s)"
    )
    if report.passed:
        print("gradcheck PASS")
        return 0
    print(f"gradcheck FAIL: {report.failures} trials above tol, worst at {report.worst_coord}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the planted synthetic corpus")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dim", type=int)
    p.add_argument("--docs", help="docs per split, e.g. 200,50,50")
    p.add_argument("--sentences", help="sentences per doc range, e.g. 4,8")
    p.add_argument("--tokens", help="tokens per sentence range, e.g. 3,6")
    p.add_argument("--noise", type=float)
    p.add_argument("--clusters", type=int)
    p.add_argument("--topics", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a RunLog")
    p.add_argument("--data", required=True, help="synth output dir or a .limd file")
    p.add_argument("--labels", help="label file (single-file mode only)")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--task", choices=["sentence", "pair"])
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=1, help="run N consecutive seeds")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--head-hidden", help="hidden widths for the deep head, e.g. 512,512")
    p.add_argument("--grad-accum", type=int)
    p.add_argument("--adam-beta1", type=float)
    p.add_argument("--adam-beta2", type=float)
    p.add_argument("--adam-eps", type=float)
    p.add_argument("--split-fractions", default="0.6,0.2,0.2")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="RunLog JSON path")
    p.add_argument("--save-model", help="write the best checkpoint here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--params", required=True, help="saved model file")
    p.add_argument("--out", help="also write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--grad-scale",
        type=float,
        default=1.0,
        help="test hook: scale analytic gradients to prove the check catches errors",
    )
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LimnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
