"""Command-line entry point: synth / train / eval / analyze / report.

Every command prints a run header echoing its effective settings, so a run
can be reproduced from its own output. Exit codes: 0 success, 2 bad
configuration, 3 I/O failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import attention as attn
from . import evaluation as ev
from . import synthgen
from .dataio import Corpus, EXERCISES, load_corpus, save_corpus
from .model import ModelConfig, load_weights, save_weights
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VALIDATION = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _report_dir(args) -> str:
    return args.report_dir or os.environ.get("REHABATTN_REPORT_DIR", ".")


def _echo_header(command: str, settings: dict):
    line = " ".join(f"{k}={v}" for k, v in sorted(settings.items()))
    print(f"# rehabattn {command} {line}")


def _load_corpus_checked(path) -> Corpus:
    try:
        return load_corpus(path)
    except FileNotFoundError as e:
        raise CliError(str(e), EXIT_IO)
    except Exception as e:
        raise CliError(f"corpus load failed: {e}", EXIT_VALIDATION)


def _model_config(args) -> ModelConfig:
    try:
        return ModelConfig(num_layers=args.layers, channels=args.channels,
                           num_heads=args.heads, t_frames=args.t_frames,
                           use_joint2subgraph=not args.no_joint2subgraph,
                           use_pos_embedding=not args.no_pos_embedding,
                           use_attentive_bias=not args.no_attentive_bias,
                           use_batch_norm=not args.no_batch_norm)
    except ValueError as e:
        raise CliError(f"bad model config: {e}", EXIT_CONFIG)


def _add_model_flags(p):
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--t-frames", type=int, default=40)
    p.add_argument("--no-joint2subgraph", action="store_true")
    p.add_argument("--no-pos-embedding", action="store_true")
    p.add_argument("--no-attentive-bias", action="store_true")
    p.add_argument("--no-batch-norm", action="store_true")


def cmd_synth(args) -> int:
    _echo_header("synth", dict(exercise=args.exercise, per_class=args.per_class,
                               noise=args.noise, margin=args.margin, seed=args.seed,
                               out=args.out, group=args.group))
    try:
        corpus = synthgen.generate_corpus(
            n_per_class=args.per_class, exercise=args.exercise,
            noise_sigma=args.noise, seed=args.seed, margin_deg=args.margin,
            group=args.group)
    except ValueError as e:
        raise CliError(str(e), EXIT_CONFIG)
    try:
        save_corpus(corpus, args.out)
    except OSError as e:
        raise CliError(f"cannot write corpus: {e}", EXIT_IO)
    print(f"wrote {len(corpus)} sequences to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    model_config = _model_config(args)
    _echo_header("train", dict(corpus=args.corpus, lr=args.lr, batch=args.batch,
                               epochs=args.epochs, seeds=",".join(map(str, seeds)),
                               layers=args.layers, channels=args.channels,
                               heads=args.heads, t_frames=args.t_frames,
                               checkpoint=args.checkpoint))
    corpus = _load_corpus_checked(args.corpus)
    final_accuracies = []
    for seed in seeds:
        try:
            tc = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                             batch_size=args.batch, seed=seed)
        except ValueError as e:
            raise CliError(f"bad train config: {e}", EXIT_CONFIG)
        try:
            weights, log = train(corpus, model_config, tc)
        except ValueError as e:
            raise CliError(str(e), EXIT_VALIDATION)
        path = args.checkpoint if len(seeds) == 1 else \
            f"{os.path.splitext(args.checkpoint)[0]}_seed{seed}.json"
        try:
            save_weights(weights, path)
        except OSError as e:
            raise CliError(f"cannot write checkpoint: {e}", EXIT_IO)
        for line in log.lines() if args.verbose else []:
            print(line)
        final = log.epochs[-1]
        final_accuracies.append(final["accuracy"])
        print(f"seed={seed} final_loss={final['loss']:.6f} "
              f"final_accuracy={final['accuracy']:.4f} checkpoint={path}")
    if len(seeds) > 1:
        acc = np.array(final_accuracies)
        print(f"train accuracy over {len(seeds)} seeds: "
              f"mean={acc.mean():.4f} std={acc.std():.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _echo_header("eval", dict(corpus=args.corpus, checkpoint=args.checkpoint,
                              scenario=args.scenario, ratio=args.ratio,
                              seed=args.seed, report_dir=_report_dir(args)))
    corpus = _load_corpus_checked(args.corpus)
    try:
        weights = load_weights(args.checkpoint)
    except FileNotFoundError as e:
        raise CliError(str(e), EXIT_IO)
    except (ValueError, KeyError) as e:
        raise CliError(f"bad checkpoint: {e}", EXIT_VALIDATION)
    try:
        plan = ev.make_split(corpus, args.scenario, ratio=args.ratio, seed=args.seed)
        test = Corpus(tuple(corpus[i] for i in plan.test_indices))
        report = ev.evaluate(weights, test)
    except (ev.SplitError, ValueError) as e:
        raise CliError(str(e), EXIT_VALIDATION)
    out_dir = _report_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, f"report_scenario{args.scenario}")
    with open(base + ".json", "w") as fh:
        fh.write(report.to_json())
    with open(base + ".txt", "w") as fh:
        fh.write(report.to_text())
    print(report.to_text(), end="")
    print(f"wrote {base}.json and {base}.txt")
    return EXIT_OK


def cmd_analyze(args) -> int:
    _echo_header("analyze", dict(corpus=args.corpus, checkpoint=args.checkpoint,
                                 report_dir=_report_dir(args)))
    corpus = _load_corpus_checked(args.corpus)
    try:
        weights = load_weights(args.checkpoint)
    except FileNotFoundError as e:
        raise CliError(str(e), EXIT_IO)
    exercises = sorted({s.exercise for s in corpus})
    maps, importances, contrasts = {}, {}, {}
    for ex in exercises:
        sub = corpus.filter(exercise=ex)
        m = attn.attention_map_for_corpus(weights, sub)
        maps[ex] = m
        importances[ex] = attn.joint_importance(m)
        labels = {s.label for s in sub}
        if "correct" in labels and labels - {"correct"}:
            cm, im = attn.correct_incorrect_maps(weights, sub)
            contrasts[ex] = attn.importance_contrast(cm, im)
    out_dir = _report_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    text = attn.render_importance_text(importances)
    with open(os.path.join(out_dir, "importance.txt"), "w") as fh:
        fh.write(text)
    attn.export_analysis(os.path.join(out_dir, "analysis.json"),
                         maps, importances, contrasts)
    attn.render_importance_image(importances, os.path.join(out_dir, "importance.png"))
    print(text, end="")
    print(f"wrote importance.txt, importance.png, analysis.json in {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    _echo_header("report", dict(reports=",".join(args.reports)))
    reports = {}
    for item in args.reports:
        if "=" not in item:
            raise CliError(f"expected exercise=report.json, got {item!r}", EXIT_CONFIG)
        ex, path = item.split("=", 1)
        if ex not in EXERCISES:
            raise CliError(f"unknown exercise {ex!r}", EXIT_CONFIG)
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise CliError(str(e), EXIT_IO)
        reports[ex] = ev.EvaluationReport(
            accuracy=doc["accuracy"], macro_f1=doc["macro_f1"],
            confusion=np.array(doc["confusion"]),
            class_frequencies=tuple(doc["class_frequencies"]),
            predictions=())
    print(ev.compare_table(reports), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rehabattn",
                                 description="Skeleton-sequence exercise error classification")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--exercise", choices=EXERCISES, required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--margin", type=float, default=25.0)
    p.add_argument("--group", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a per-exercise classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lr", type=float, default=2.5e-3)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma-separated seeds; reports mean/std over runs")
    p.add_argument("--verbose", action="store_true")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under a scenario split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--ratio", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="joint-importance analysis from attention weights")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render the accuracy comparison table")
    p.add_argument("reports", nargs="+", metavar="exercise=report.json")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
