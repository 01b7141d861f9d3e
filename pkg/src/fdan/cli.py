"""Command-line entry point: ``fdan synth | train | eval | project``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import csv
import json
import logging
import sys

import numpy as np

from .data import (SynthSpec, concat_domains, load_feature_file, stratified_split,
                   synth_domains, write_feature_file)
from .errors import ConfigError, DivergenceError, FdanError
from .fileutil import atomic_write
from .kernels import KernelSpec
from .metrics import pca_project
from .model import forward_stream, load_checkpoint, save_checkpoint
from .trainer import ABLATIONS, TrainConfig, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("fdan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_dump(obj) -> str:
    return json.dumps(obj, sort_keys=False, separators=(", ", ": "))


def cmd_synth(args) -> int:
    fields = {}
    if args.spec:
        with open(args.spec) as fh:
            fields = json.load(fh)
        known = {f.name for f in dataclasses.fields(SynthSpec)}
        unknown = set(fields) - known
        if unknown:
            raise ConfigError(f"unknown synthetic spec fields: {sorted(unknown)}")
    visual, acoustic = synth_domains(SynthSpec(**fields))
    write_feature_file(visual, args.out_visual)
    write_feature_file(acoustic, args.out_acoustic)
    return EXIT_OK


def cmd_train(args) -> int:
    source = concat_domains([load_feature_file(p, "visual", args.classes) for p in args.visual])
    target = load_feature_file(args.acoustic, "acoustic", args.classes)
    if source.classes != target.classes:
        raise ConfigError(
            f"visual data has {source.classes} classes, acoustic has {target.classes}")
    config = TrainConfig(alpha=args.alpha, momentum=args.momentum,
                         weight_decay=args.decay, lr=args.lr, batch_size=args.batch,
                         epochs=args.epochs, seed=args.seed, ablation=args.ablation,
                         kernel=KernelSpec(family=args.kernel))
    target_train, target_test = stratified_split(target, args.split, args.seed)
    log.info("source %d samples, target train %d, target test %d",
             source.n, target_train.n, target_test.n)
    params, history = train(config, source, target_train, target_test,
                            dim=args.dim, hidden=args.hidden or 2 * args.dim,
                            layers=args.layers)
    save_checkpoint(params, args.out_model)
    if args.history:
        atomic_write(args.history,
                     "".join(_json_dump(r.to_dict()) + "\n" for r in history))
    if args.out_test:
        write_feature_file(target_test, args.out_test)
    if args.report:
        report = evaluate(params, target_test, "a")
        atomic_write(args.report, _json_dump(report.to_dict()) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    params = load_checkpoint(args.model)
    domain = load_feature_file(args.data, None, args.classes)
    if domain.classes != params.arch.classes:
        raise ConfigError(
            f"data has {domain.classes} classes, model has {params.arch.classes}")
    report = evaluate(params, domain, args.modality)
    text = _json_dump(report.to_dict()) + "\n"
    if args.report:
        atomic_write(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_project(args) -> int:
    params = load_checkpoint(args.model)
    acts, tags, classes = [], [], []
    for path in args.data:
        dom = load_feature_file(path, None, args.classes)
        modality = "v" if dom.modality == "visual" else "a"
        layers, _ = forward_stream(params, dom.features, modality)
        acts.append(layers[-1].data)
        tags += [dom.modality] * dom.n
        classes += [dom.class_names[c] for c in dom.label_indices]
    coords = pca_project(np.vstack(acts), 2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["modality", "class", "x", "y"])
    for tag, cls, (x, y) in zip(tags, classes, coords):
        w.writerow([tag, cls, repr(float(x)), repr(float(y))])
    atomic_write(args.out, buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fdan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic visual/acoustic pair")
    s.add_argument("--spec", help="JSON file with synthetic spec fields")
    s.add_argument("--out-visual", required=True)
    s.add_argument("--out-acoustic", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--visual", nargs="+", required=True,
                   help="one or more source files; several are concatenated")
    t.add_argument("--acoustic", required=True)
    t.add_argument("--alpha", type=float, default=1e-3)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--momentum", type=float, default=0.99)
    t.add_argument("--decay", type=float, default=1e-4)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--layers", type=int, default=2)
    t.add_argument("--dim", type=int, default=64)
    t.add_argument("--hidden", type=int, default=None, help="FFN width (default 2*dim)")
    t.add_argument("--kernel", choices=("gaussian", "linear"), default="gaussian")
    t.add_argument("--ablation", choices=ABLATIONS, default="full")
    t.add_argument("--split", type=float, default=0.8,
                   help="per-class fraction of target samples used for training")
    t.add_argument("--classes", type=int, default=None, help="class count for CSV input")
    t.add_argument("--out-model", required=True)
    t.add_argument("--history", help="JSON-lines file, one record per epoch")
    t.add_argument("--report", help="metrics of the final model on the target test split")
    t.add_argument("--out-test", help="write the target test split as a feature file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a feature file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--modality", choices=("v", "a"), required=True)
    e.add_argument("--classes", type=int, default=None)
    e.add_argument("--report", help="output JSON (stdout when omitted)")
    e.set_defaults(func=cmd_eval)

    j = sub.add_parser("project", help="export 2-D PCA coordinates of final activations")
    j.add_argument("--model", required=True)
    j.add_argument("--data", nargs="+", required=True)
    j.add_argument("--classes", type=int, default=None)
    j.add_argument("--out", required=True)
    j.set_defaults(func=cmd_project)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"fdan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"fdan: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"fdan: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FdanError, OSError, json.JSONDecodeError) as exc:
        print(f"fdan: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
