"""Command-line entry point: datagen, train, experiment, report, selftest.

Every run prints a reproducibility header (version, seed, mode, resolved
configuration). Exit codes: 0 success, 1 usage error, 2 runtime failure.
The DTX_WORKERS environment variable caps worker pools.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__

PAPER_LR = 1.5e-5
PAPER_BATCH = 16384
PAPER_EPOCHS = 20


def _workers(requested) -> int:
    cap = os.environ.get("DTX_WORKERS")
    if cap is not None:
        return max(1, min(int(requested or 1), int(cap)))
    if requested is None:
        return 1
    return max(1, int(requested))


def _header(subcommand: str, seed, mode, config: dict):
    print("dtxsim %s | %s | seed=%s mode=%s" % (__version__, subcommand, seed, mode))
    for key in sorted(config):
        print("  %s = %s" % (key, config[key]))
    sys.stdout.flush()


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, synopsis on stderr
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> _Parser:
    parser = _Parser(prog="dtxsim", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("datagen", help="generate a training corpus")
    p.add_argument("--schedules", default="builtin",
                   help="'builtin' (the ten canonical proportion tuples, "
                        "permuted) or a file with one comma-separated tuple per line")
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--lockstep", action="store_true", default=True)
    p.add_argument("--threaded", dest="lockstep", action="store_false")
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--limit-schedules", type=int, default=None,
                   help="use only the first N schedules (desk-scale runs)")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("train", help="train the DTX model on a corpus")
    p.add_argument("--corpus", required=True, help="manifest.csv path")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=int, default=PAPER_EPOCHS)
    p.add_argument("--batch", type=int, default=PAPER_BATCH)
    p.add_argument("--lr", type=float, default=PAPER_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seq-len", type=int, default=1)
    p.add_argument("--norm-out", default=None,
                   help="also write the fitted norm stats to this file")

    p = sub.add_parser("experiment", help="run a BGT or OTM trial batch")
    p.add_argument("--kind", required=True, choices=["bgt", "otm"])
    p.add_argument("--a", required=True, help="majority / first strategy")
    p.add_argument("--b", required=True, help="second strategy (OTM defector)")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None, help="model file (needed for DTX)")
    p.add_argument("--out", required=True)
    p.add_argument("--lockstep", action="store_true", default=True)
    p.add_argument("--threaded", dest="lockstep", action="store_false")
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("report", help="statistics and plot data from trials")
    p.add_argument("--trials", required=True, help="trials.csv path")
    p.add_argument("--out", required=True)
    p.add_argument("--label-a", default="A")
    p.add_argument("--label-b", default="B")

    sub.add_parser("selftest", help="run the built-in invariant suites")
    return parser


def _cmd_datagen(args) -> int:
    from . import datagen
    from .session import LOCKSTEP, THREADED

    if args.schedules == "builtin":
        schedules = datagen.enumerate_schedules()
    else:
        schedules = []
        with open(args.schedules) as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith("#"):
                    schedules.append(tuple(int(v) for v in line.split(",")))
        schedules = datagen.enumerate_schedules(schedules)
    if args.limit_schedules is not None:
        schedules = schedules[:args.limit_schedules]
    mode = LOCKSTEP if args.lockstep else THREADED
    plan = datagen.GenPlan(schedules=schedules, trials_per_schedule=args.trials,
                           base_seed=args.seed, duration=args.duration, mode=mode)
    _header("datagen", args.seed, mode, {
        "schedules": len(schedules), "trials_per_schedule": args.trials,
        "duration": args.duration, "out": args.out,
        "sessions": len(schedules) * args.trials})
    manifest = datagen.generate(plan, args.out, workers=_workers(args.workers))
    stats_path = os.path.join(args.out, "normstats.txt")
    datagen.fit_norm_stats(manifest, stats_path)
    print("manifest: %s" % manifest)
    print("norm stats: %s" % stats_path)
    return 0


def _cmd_train(args) -> int:
    from . import datagen
    from .neural import TrainConfig, save_model, train

    _header("train", args.seed, "-", {
        "corpus": args.corpus, "epochs": args.epochs, "batch": args.batch,
        "lr": args.lr, "seq_len": args.seq_len, "out": args.out})
    stats = datagen.fit_norm_stats(args.corpus, args.norm_out)
    x, y = datagen.load_training_arrays(args.corpus, stats, args.seq_len)
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs,
                      seed=args.seed, learning_rate=args.lr)
    params, curve = train(x, y, cfg, stats, seq_len=args.seq_len)
    for i, loss in enumerate(curve, start=1):
        print("epoch %d/%d loss %.6g" % (i, len(curve), loss))
    save_model(params, args.out)
    print("model: %s" % args.out)
    return 0


def _cmd_experiment(args) -> int:
    from .experiments import BGT, OTM, ExperimentSpec, run_experiment, write_trials_csv
    from .session import LOCKSTEP, THREADED

    mode = LOCKSTEP if args.lockstep else THREADED
    spec = ExperimentSpec(kind=BGT if args.kind == "bgt" else OTM,
                          strategy_a=args.a, strategy_b=args.b,
                          trials=args.trials, base_seed=args.seed,
                          duration=args.duration, mode=mode)
    _header("experiment", args.seed, mode, {
        "kind": spec.kind, "a": args.a, "b": args.b, "trials": args.trials,
        "duration": args.duration, "model": args.model, "out": args.out})
    obs = run_experiment(spec, model_path=args.model,
                         workers=_workers(args.workers))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trials.csv")
    write_trials_csv(obs, path)
    print("trials: %s" % path)
    return 0


def _cmd_report(args) -> int:
    from .analysis import report

    _header("report", "-", "-", {"trials": args.trials, "out": args.out})
    summary = report(args.trials, args.out, args.label_a, args.label_b)
    for key in ("n", "mean_a", "mean_b", "w", "p", "verdict"):
        print("%s: %s" % (key, summary[key]))
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    _header("selftest", "-", "-", {})
    return run_selftest()


_HANDLERS = {
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    # keep BLAS single-threaded: tiny matrices, and reductions stay
    # bit-reproducible for the determinism contract
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print("dtxsim: error: %s" % e, file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.subcommand](args)
    except (ValueError, OSError, RuntimeError) as e:
        print("dtxsim: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
