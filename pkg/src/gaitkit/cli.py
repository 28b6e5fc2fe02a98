"""Command-line interface: synth / train / search / simulate / cost /
report subcommands with JSON-first outputs and a run manifest per command.

Exit codes: 0 success, 2 usage or validation error, 3 runtime/numeric
failure (e.g. divergent training).
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import dataio as D
from . import hwcost as H
from . import models as M
from . import search as SE
from . import stream as S
from . import train as TR
from .errors import GaitkitError, TrainingError


def _write_manifest(out_dir, command, config, seed, artifacts, t0):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifacts": sorted(artifacts),
        "tool_version": __version__,
        "wall_time_s": time.monotonic() - t0,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
    return path


def _ensure_out(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise GaitkitError(f"output directory {path!r} is not writable: {exc}")
    return path


def _model_config(args):
    kw = {}
    if args.arch in ("cnn1d", "sepcnn1d"):
        kw["num_blocks"] = args.num_blocks
    elif args.arch == "lstm":
        kw["h_size"] = args.h_size
    else:
        kw["d_model"] = args.d_model
    return M.ModelConfig(args.arch, n=args.n, bitwidth=args.bitwidth, **kw)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    t0 = time.monotonic()
    out = _ensure_out(args.out)
    segments = D.synth_dataset(args.seed, args.participants, args.seconds)
    paths = D.write_sessions(segments, out)
    _write_manifest(out, "synth",
                    {"participants": args.participants, "seconds": args.seconds},
                    args.seed, paths, t0)
    print(f"wrote {len(paths)} session files to {out}")
    return 0


def cmd_train(args):
    t0 = time.monotonic()
    out = _ensure_out(args.out)
    cfg = _model_config(args)
    tc = TR.TrainConfig(bs=args.bs, lr=args.lr, epochs=args.epochs, seed=args.seed)
    segments = D.load_sessions(args.data)
    scfg = S.StreamConfig(w=args.w, d=args.d, s=args.s, f=args.f)
    if scfg.n != cfg.n:
        raise GaitkitError(f"window config yields n={scfg.n} but model expects n={cfg.n}")
    per_pid = TR.windows_by_participant(segments, scfg)
    model, log1 = TR.train_generalized(cfg, tc, per_pid, args.hold_out)
    subject = per_pid[args.hold_out]
    split = TR.split_participant(subject)
    model, log2 = TR.finetune_qat(model, subject, split, tc)
    f1_fq = TR.evaluate(model, subject, split.test, mode="fakequant")
    f1_int = TR.evaluate(model, subject, split.test, mode="int")

    ckpt = os.path.join(out, "model.json")
    model.save(ckpt)
    log_path = os.path.join(out, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as f:
        for stage, log in (("generalized", log1), ("finetune", log2)):
            for entry in log:
                f.write(json.dumps({"stage": stage, **entry}, sort_keys=True) + "\n")
    _write_manifest(out, "train",
                    {"model": cfg.__dict__, "train": tc.__dict__,
                     "hold_out": args.hold_out},
                    args.seed, [ckpt, log_path], t0)
    print(json.dumps({"test_f1_fakequant": f1_fq, "test_f1_int": f1_int},
                     sort_keys=True))
    return 0


def cmd_search(args):
    t0 = time.monotonic()
    out = _ensure_out(args.out)
    profile = H.load_profile(args.platform)
    if args.data:
        segments = D.load_sessions(args.data)
    else:
        segments = D.synth_dataset(args.seed, participants=2, seconds_per_class=30.0)
    scfg = S.StreamConfig()
    per_pid = TR.windows_by_participant(segments, scfg)
    pid = sorted(per_pid)[0]
    windows = per_pid[pid]
    split = TR.split_participant(windows)
    Xtr, ytr = TR.to_xy(windows, split.train)
    Xval, yval = TR.to_xy(windows, split.val)

    kw_name = {"cnn1d": "num_blocks", "sepcnn1d": "num_blocks",
               "lstm": "h_size", "transformer": "d_model"}[args.arch]

    def evaluator(genes, seed):
        cfg = M.ModelConfig(args.arch, n=scfg.n, bitwidth=genes["bitwidth"],
                            **{kw_name: genes["variable"]})
        report = H.cost_report(cfg, profile)
        if not report.deployable:
            return 0.0, report.energy_uj, False
        tc = TR.TrainConfig(bs=genes["bs"], lr=genes["lr"],
                            epochs=args.epochs, seed=seed)
        model = M.build(cfg, seed=seed)
        TR.fit(model, (Xtr, ytr), (Xval, yval), tc)
        logits = model.forward(Xval)
        f1 = TR.f1_score(np.asarray(logits).argmax(axis=1), yval)
        return f1, report.energy_uj, True

    space = SE.SearchSpace(args.arch)
    archive, front = SE.run_search(space, args.budget, evaluator,
                                   seed=args.seed, population=args.population)
    arc_path = os.path.join(out, "archive.jsonl")
    with open(arc_path, "w", encoding="utf-8") as f:
        for t in archive:
            f.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
    front_path = os.path.join(out, "front.json")
    with open(front_path, "w", encoding="utf-8") as f:
        json.dump([t.to_dict() for t in front], f, sort_keys=True, indent=2)
    csv_path = os.path.join(out, "scatter.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("index,f1,energy_uj,deployable,on_front\n")
        on_front = {t.index for t in front}
        for t in archive:
            f.write(f"{t.index},{t.f1},{t.energy_uj},{int(t.deployable)},"
                    f"{int(t.index in on_front)}\n")
    _write_manifest(out, "search",
                    {"arch": args.arch, "budget": args.budget,
                     "platform": args.platform, "population": args.population,
                     "epochs": args.epochs},
                    args.seed, [arc_path, front_path, csv_path], t0)
    print(f"archive: {len(archive)} trials, front: {len(front)}")
    return 0


def cmd_simulate(args):
    t0 = time.monotonic()
    model = M.Model.load(args.model)
    segments = D.load_sessions(args.data)
    cfg = S.StreamConfig(w=args.w, f=args.f, s=args.s, d=args.d,
                         n_consec=args.n_consec, cooldown=args.cooldown)
    if cfg.n != model.config.n:
        raise GaitkitError(f"window config yields n={cfg.n} but model expects "
                           f"n={model.config.n}")
    mode = "int" if model.quantized is not None else "float"

    def predict(window):
        return int(np.asarray(model.forward(window, mode=mode)).argmax())

    target = D.LABELS.index(args.target)
    all_records, all_events = [], []
    for seg in segments:
        records, events = S.simulate(predict, seg.acc, cfg, target_class=target)
        all_records += records
        all_events += events
    summary = {
        "windows": len(all_records),
        "events": len(all_events),
        "mean_counter": (float(np.mean([r["counter"] for r in all_records]))
                         if all_records else 0.0),
        "feedback_latency_s": S.feedback_latency(cfg),
        "realtime_bound_s": S.realtime_bound(cfg),
    }
    if args.latency_ms is not None:
        summary["realtime_ok"] = S.realtime_ok(cfg, args.latency_ms * 1e-3)
    lines = [json.dumps(r, sort_keys=True) for r in all_records]
    if args.out:
        out = _ensure_out(args.out)
        log_path = os.path.join(out, "events.jsonl")
        with open(log_path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + ("\n" if lines else ""))
        _write_manifest(out, "simulate", {"stream": cfg.__dict__,
                                          "target": args.target},
                        0, [log_path], t0)
    else:
        for line in lines:
            print(line)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_cost(args):
    profile = H.load_profile(args.platform)
    if args.model:
        cfg = M.Model.load(args.model).config
    else:
        cfg = _model_config(args)
    report = H.cost_report(cfg, profile)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_report(args):
    trials = []
    with open(args.archive, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                trials.append(SE.Trial(d["genes"], d["f1"], d["energy_uj"],
                                       d["deployable"], d["seed"], d["index"]))
    front = SE.pareto_front(trials)
    front.sort(key=lambda t: -t.f1)
    print(f"{'idx':>4} {'f1':>7} {'energy_uJ':>11} genes")
    for t in front:
        print(f"{t.index:>4} {t.f1:>7.3f} {t.energy_uj:>11.3f} "
              f"{json.dumps(t.genes, sort_keys=True)}")
    return 0


# ---------------------------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--arch", required=True,
                   choices=["cnn1d", "sepcnn1d", "lstm", "transformer"])
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--bitwidth", type=int, default=8)
    p.add_argument("--num-blocks", type=int, default=3, dest="num_blocks")
    p.add_argument("--h-size", type=int, default=24, dest="h_size")
    p.add_argument("--d-model", type=int, default=8, dest="d_model")


def _add_stream_flags(p):
    p.add_argument("--w", type=int, default=50)
    p.add_argument("--f", type=float, default=100.0)
    p.add_argument("--s", type=float, default=0.25)
    p.add_argument("--d", type=int, default=2)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaitkit",
        description="Quantized gait classifiers with streaming feedback and "
                    "FPGA cost modeling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--participants", type=int, default=12)
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="two-step training plus integer export")
    _add_model_flags(p)
    _add_stream_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--hold-out", required=True, dest="hold_out")
    p.add_argument("--out", required=True)
    p.add_argument("--bs", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="bi-objective config search")
    p.add_argument("--arch", required=True,
                   choices=["cnn1d", "sepcnn1d", "lstm", "transformer"])
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--platform", default="large")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--epochs", type=int, default=5)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("simulate", help="stream a session through the trigger")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_stream_flags(p)
    p.add_argument("--n-consec", type=int, default=5, dest="n_consec")
    p.add_argument("--cooldown", type=float, default=0.5)
    p.add_argument("--target", default="heel", choices=list(D.LABELS))
    p.add_argument("--latency-ms", type=float, default=None, dest="latency_ms")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", help="latency/power/energy/resources report")
    p.add_argument("--model")
    p.add_argument("--platform", default="large")
    _add_model_flags_optional(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("report", help="print the Pareto front of an archive")
    p.add_argument("--archive", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _add_model_flags_optional(p):
    p.add_argument("--arch", choices=["cnn1d", "sepcnn1d", "lstm", "transformer"])
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--bitwidth", type=int, default=8)
    p.add_argument("--num-blocks", type=int, default=3, dest="num_blocks")
    p.add_argument("--h-size", type=int, default=24, dest="h_size")
    p.add_argument("--d-model", type=int, default=8, dest="d_model")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "cost" and not args.model and not args.arch:
        parser.error("cost requires --model or --arch")
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GaitkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
