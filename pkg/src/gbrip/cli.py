"""``gbpll`` command line: synth | train | eval | inspect-balls | report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as D
from . import evalrep as E
from . import model as M
from . import trainer as T
from .disambig import init_confidence
from .errors import DataError, NumericalError
from .gbgraph import build_graph
from .gbspace import build_gb_space

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("gbrip")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(p):
    defaults = T.TrainConfig()
    group = p.add_argument_group("training config (override --config values)")
    for f in dataclasses.fields(T.TrainConfig):
        if f.name == "threads":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if f.type == "bool":
            group.add_argument(flag, type=_parse_bool, default=None, metavar="BOOL", help=f"(default: {T._fmt(default)})")
        else:
            kind = {"int": int, "float": float}.get(f.type, str)
            group.add_argument(flag, type=kind, default=None, help=f"(default: {default})")


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser():
    parser = _Parser(prog="gbpll", description="Granular-ball imbalanced partial-label learning.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic long-tailed PLL dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--max-count", type=int, default=300)
    p.add_argument("--gamma", type=float, default=20.0)
    p.add_argument("--psi", type=float, default=0.4)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=1.75)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", default=None, help="also write a balanced test split here")
    p.add_argument("--test-per-class", type=int, default=200)
    p.add_argument("--features-csv", default=None,
                   help="build from an external numeric table (last column = label) instead of blobs")

    p = sub.add_parser("train", help="train on a dataset file, write checkpoint and report")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", default=None, help="report path (default: <out>.report.jsonl)")
    p.add_argument("--resume", default=None, help="continue from this checkpoint")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: $GBPLL_THREADS or 1)")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labelled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report path (text); <out>.jsonl also written")
    p.add_argument("--train-data", default=None,
                   help="training set, for shot groups, disambiguation rate and prior error")

    p = sub.add_parser("inspect-balls", help="dump granular balls, graph and confidences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", action="store_true", help="also print intra and inter-ball edges")
    p.add_argument("--confidence", action="store_true", help="also print the confidence matrix")
    p.add_argument("--out", default=None, help="write here instead of stdout")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("report", help="compare eval reports in a table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default=None)
    return parser


def _threads(args):
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        raw = os.environ.get("GBPLL_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"GBPLL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_synth(args):
    if args.features_csv:
        x, y = D.load_feature_table(args.features_csv)
        ds = D.from_arrays(x, y, flip_prob=args.psi, seed=args.seed)
    else:
        try:
            spec = D.LongTailSpec(args.classes, args.max_count, args.gamma, args.psi, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ds = D.make_longtail_pll(spec, dim=args.dim, separation=args.separation, noise_scale=args.noise)
    D.save_dataset(ds, args.out)
    print(f"wrote {args.out}: n={ds.sample_count} l={ds.class_count} d={ds.dim} counts={ds.class_counts().tolist()}")
    if args.test_out:
        if args.features_csv:
            raise UsageError("--test-out is only available for synthetic blobs")
        L = args.classes
        x, y = D.synth_blobs([args.test_per_class] * L, L, args.dim, args.separation, args.noise,
                             [args.seed, 0x7E57], center_seed=args.seed)
        test = D.PllDataset(x, D.corrupt_labels(y, L, 0.0, 0), y, {"seed": args.seed, "psi": 0.0})
        D.save_dataset(test, args.test_out)
        print(f"wrote {args.test_out}: n={test.sample_count}")
    return EXIT_OK


def _load_config(args):
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise DataError(f"cannot read config {args.config}: {exc.strerror}") from None
        values.update(T.parse_config_text(text, args.config))
    for f in dataclasses.fields(T.TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "threads":
            values[f.name] = v
    values["threads"] = _threads(args)
    try:
        return T.TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def cmd_train(args):
    ds = D.load_dataset(args.data)
    config = _load_config(args)
    labels = ds.true_labels

    def monitor(state, f):
        return {
            "train_accuracy": float((f.argmax(axis=1) == labels).mean()),
            "disambiguation_rate": E.disambiguation_rate(state.P, labels),
        }

    resume = None
    if args.resume:
        resume, _, _ = T.load_state(args.resume, ds.sample_count)
    _, report, state = T.train(ds.train_view(), config, monitor=monitor, resume=resume)
    report.checkpoint_path = Path(args.out).name
    T.save_state(args.out, state, config, {"class_counts": ds.class_counts().tolist()})
    report_path = args.report or f"{args.out}.report.jsonl"
    Path(report_path).write_text(report.to_jsonl())
    last = report.records[-1] if report.records else {}
    print(f"trained {len(report.records)} epochs; final loss {last.get('loss', float('nan')):.6f}; "
          f"checkpoint {args.out}; report {report_path}")
    return EXIT_OK


def cmd_eval(args):
    params, blocks, header = M.load_checkpoint(args.checkpoint)
    test = D.load_dataset(args.data)
    if test.dim != params.in_dim:
        raise DataError(f"{args.data}: {test.dim} features, checkpoint expects {params.in_dim}")
    train_counts = header.get("class_counts")
    train = D.load_dataset(args.train_data) if args.train_data else None
    if train is not None:
        train_counts = train.class_counts().tolist()
    report = E.evaluate(params, test.features, test.true_labels, train_counts)
    if train is not None:
        P = blocks.get("confidence")
        if P is not None and P.shape[0] == train.sample_count:
            report.disambiguation_rate = E.disambiguation_rate(P, train.true_labels)
        if "prior" in blocks:
            report.prior_error = E.prior_error(blocks["prior"], train.true_labels, train.class_count)
    E.write_report(report, args.out)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_inspect(args):
    params, blocks, header = M.load_checkpoint(args.checkpoint)
    ds = D.load_dataset(args.data)
    if ds.dim != params.in_dim:
        raise DataError(f"{args.data}: {ds.dim} features, checkpoint expects {params.in_dim}")
    hidden, f = M.forward(params, ds.features)
    seed = header.get("config", {}).get("seed", 0)
    space = build_gb_space(hidden, seed=seed)
    lines = []
    for k, ball in enumerate(space.balls):
        lines.append(f"ball {k} size={ball.size} radius={ball.radius:.6g} center_norm={np.linalg.norm(ball.center):.6g}")
    hist = " ".join(f"{s}:{c}" for s, c in sorted(space.size_histogram().items()))
    lines.append(f"summary balls={space.ball_count} threshold={space.split_threshold} sizes={hist}")
    if args.graph:
        graph = build_graph(space, hidden, threads=_threads(args))
        for i, j, w in graph.intra_edges():
            lines.append(f"edge {i} {j} {w:.6g}")
        for (a, b), w in sorted(graph.inter_edges.items()):
            lines.append(f"balledge {a} {b} {w:.6g}")
        if graph.degenerate_edges:
            lines.append(f"warning coincident_ball_centers={graph.degenerate_edges}")
    if args.confidence:
        P = blocks.get("confidence")
        if P is None or P.shape[0] != ds.sample_count:
            P = init_confidence(ds.candidates, f, np.ones(ds.sample_count))
        for i in range(P.shape[0]):
            cells = ", ".join(f"{j}={P[i, j]:.6g}" for j in np.flatnonzero(ds.candidates[i]))
            lines.append(f"{i}: {cells}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_report(args):
    named = []
    for path in args.runs:
        try:
            named.append((Path(path).name, E.read_record(path)))
        except OSError as exc:
            raise DataError(f"cannot read report {path}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: {exc}") from None
    _emit(E.comparison_table(named), args.out)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "inspect-balls": cmd_inspect,
    "report": cmd_report,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    logging.basicConfig(level=logging.WARNING)
    sys.exit(run())


if __name__ == "__main__":
    main()
