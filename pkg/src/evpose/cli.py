"""Command-line surface: simulate, train, eval, stream, gradcheck, bench, plot.

Heavy imports happen inside the handlers so --help stays instant and the
E3DPSM_THREADS cap can take effect before numpy's thread pools spin up.
"""

from __future__ import annotations

import argparse
import os
import sys


def _cap_threads() -> None:
    n = os.environ.get("E3DPSM_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH",
                   help="config file of key = value lines")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def _build_config(args, base_text: str | None = None):
    from .config import Config
    cfg = Config.from_text(base_text) if base_text else Config()
    if args.config:
        cfg.load_file(args.config)
    for item in args.set:
        cfg.apply_assignment(item)
    cfg.validate()
    return cfg


def _load_model(args):
    """Model from a checkpoint; CLI overrides stack on the embedded config."""
    from .checkpoint import load_checkpoint, restore
    from .train import build_net
    ckpt_cfg, arrays = load_checkpoint(args.ckpt)
    cfg = _build_config(args, base_text=ckpt_cfg.as_text())
    store, net = build_net(cfg)
    restore(store, arrays)
    return cfg, net


def cmd_simulate(args) -> int:
    from .synth import synthesize_dataset, write_dataset
    cfg = _build_config(args)
    ds = synthesize_dataset(cfg)
    ev_path, pose_path = write_dataset(args.out, ds)
    print(f"{len(ds.events)} events -> {ev_path}")
    print(f"{len(ds.poses)} poses  -> {pose_path}")
    return 0


def cmd_train(args) -> int:
    from .synth import read_dataset, synthesize_dataset
    from .train import train
    cfg = _build_config(args)
    ds = read_dataset(args.data) if args.data else synthesize_dataset(cfg)
    result = train(cfg, ds, out_dir=args.out, resume_from=args.resume,
                   log=print)
    last = result.curve[-1]
    tag = " (early stop)" if result.stopped_early else ""
    print(f"done after epoch {last.epoch + 1}: loss {last.loss:.4f}, "
          f"train mpjpe {last.mpjpe:.2f} mm{tag}")
    print(f"checkpoint: {result.ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate, pog_experiment
    from .synth import read_dataset
    cfg, net = _load_model(args)
    ds = read_dataset(args.data)
    report = evaluate(net, cfg, ds, joint_filter=args.joints)
    print(report.table())
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
        print(f"wrote {args.csv}")
    if args.pog:
        ks = tuple(int(k) for k in args.pog.split(","))
        gains = pog_experiment(net, cfg, ds, ks=ks)
        if gains is None:
            print("pog: no qualifying occluded joints in this stream")
        else:
            for k, g in gains.items():
                print(f"pog[{k:>3}] = {g:+.2f} mm")
    return 0


def cmd_stream(args) -> int:
    from .events import read_events
    from .metrics import MetricsReport
    from .stream import match_nearest, stream_poses
    from .synth import read_poses
    cfg, net = _load_model(args)
    events, _, _ = read_events(args.events)
    times, poses, rate = stream_poses(net, cfg, events, t0=args.t0,
                                      count=args.windows)
    print(f"{len(poses)} poses at {rate:.1f} poses/s")
    if args.out:
        j = poses.shape[1] if len(poses) else net.joints
        header = "t_us," + ",".join(f"j{i}{a}" for i in range(j) for a in "xyz")
        with open(args.out, "w") as fh:
            fh.write(header + "\n")
            for t, p in zip(times, poses):
                fh.write(f"{t}," + ",".join(f"{v:.3f}" for v in p.ravel())
                         + "\n")
        print(f"wrote {args.out}")
    if args.poses:
        gt = read_poses(args.poses)
        idx = match_nearest(times, gt.times)
        report = MetricsReport(throughput=rate)
        report.add("stream", poses, gt.poses[idx].astype(float))
        print(report.table())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite
    results = run_suite(seed=args.seed)
    tol = 1e-4
    ok = True
    for name, err in results.items():
        mark = "ok" if err < tol else "FAIL"
        ok &= err < tol
        print(f"{name:<14} max rel err {err:.3e}  {mark}")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    from .bench import bench_kernels, format_table
    from .kernels import active_backend
    print(f"active backend: {active_backend()}")
    print(format_table(bench_kernels(repeats=args.repeats)))
    return 0


def cmd_plot(args) -> int:
    from .plots import plot_drift, plot_jitter, plot_loss
    if args.what == "drift":
        written = plot_drift(args.out)
    elif args.what == "loss":
        if not args.train_csv:
            raise SystemExit("plot loss needs --train-csv")
        written = plot_loss(args.out, args.train_csv)
    else:
        if not (args.ckpt and args.data):
            raise SystemExit("plot jitter needs --ckpt and --data")
        from .synth import read_dataset
        cfg, net = _load_model(args)
        written = plot_jitter(args.out, net, cfg, read_dataset(args.data))
    for path in written:
        print(f"wrote {path}")
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evpose",
        description="event-camera 3D pose estimation: synthetic data, "
                    "training, evaluation, and streaming inference")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize an event dataset")
    _add_common(s)
    s.add_argument("--out", required=True,
                   help="base path; writes .evs1 and .pse1")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("train", help="train a model")
    _add_common(s)
    s.add_argument("--data", help="dataset base path (default: synthesize "
                                  "from the config)")
    s.add_argument("--out", required=True, help="run directory for the "
                                                "checkpoint and loss curve")
    s.add_argument("--resume", help="checkpoint to fine-tune from")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(s)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True, help="dataset base path")
    s.add_argument("--joints", choices=("all", "occluded-only"),
                   default="all")
    s.add_argument("--csv", help="also write the report as CSV")
    s.add_argument("--pog", metavar="K1,K2,...",
                   help="past-only-gain experiment at these history lengths")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("stream", help="streaming inference over an event file")
    _add_common(s)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--events", required=True, help="EVS1 event file")
    s.add_argument("--poses", help="PSE1 ground truth; metrics use the "
                                   "nearest pose per emitted window")
    s.add_argument("--out", help="write emitted poses as CSV")
    s.add_argument("--t0", type=int, default=None,
                   help="window origin in us (default: first event)")
    s.add_argument("--windows", type=int, default=None,
                   help="emit exactly this many windows from t0")
    s.set_defaults(fn=cmd_stream)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("bench", help="compare kernel backends")
    s.add_argument("--repeats", type=int, default=5)
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("plot", help="emit curve CSVs (and PNGs when "
                                    "matplotlib is available)")
    _add_common(s)
    s.add_argument("what", choices=("drift", "loss", "jitter"))
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--train-csv", help="loss_curve.csv from a training run")
    s.add_argument("--ckpt", help="checkpoint (jitter)")
    s.add_argument("--data", help="dataset base path (jitter)")
    s.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    _cap_threads()
    args = _parser().parse_args(argv)
    from .errors import ConfigError, EvposeError
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EvposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
