"""Command-line entry point.

Subcommands: train, eval, gradcheck, bench-knn, ablate.  Exit codes:
0 success, 1 failure (invalid config values, gradient-check failures,
divergence), 2 usage errors (argparse problems, missing files).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .gradsuite import run_gradient_suite
from .harness import TrainingDiverged, evaluate, train
from .network import build_network


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        print(f"error: file not found: {p}", file=sys.stderr)
        sys.exit(2)
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_loss_curve(path: Path, curve) -> None:
    lines = ["iteration,lr,loss"]
    lines += [f"{pt.iteration},{pt.learning_rate:.10g},{pt.loss:.10g}" for pt in curve]
    path.write_text("\n".join(lines) + "\n")


def _write_metrics(out: Path, report) -> None:
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    lines = ["metric,value", f"oa,{report.oa:.10g}", f"macc,{report.macc:.10g}", f"miou,{report.miou:.10g}"]
    for c, iou in enumerate(report.per_class_iou):
        lines.append(f"iou_class_{c}," + ("" if np.isnan(iou) else f"{iou:.10g}"))
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")


def _load_run_config(path: str, seed_override) -> RunConfig:
    cfg = load_config(_require_file(path))
    if seed_override is not None:
        cfg.seed = seed_override
        cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config, args.seed)
    out = _out_dir(args.out)
    net = build_network(cfg.backbone(), seed=cfg.seed)
    scenes = cfg.train_scenes()
    try:
        result = train(net, scenes, cfg.optimizer_state(), cfg.iterations)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_loss_curve(out / "loss.csv", result.curve)
    save_checkpoint(out / "checkpoint.json", net)
    print(f"trained {cfg.iterations} iterations; final loss {result.final_loss:.6f}")
    print(f"wrote {out / 'loss.csv'} and {out / 'checkpoint.json'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run_config(args.config, args.seed)
    ckpt_path = _require_file(args.checkpoint)
    out = _out_dir(args.out)
    net = load_checkpoint(ckpt_path)
    scenes = cfg.train_scenes() if args.on_train else cfg.eval_scenes()
    report = evaluate(net, scenes, cfg.data_num_classes)
    _write_metrics(out, report)
    print(f"OA {report.oa:.4f}  mAcc {report.macc:.4f}  mIoU {report.miou:.4f}")
    print(f"wrote {out / 'metrics.json'} and {out / 'metrics.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    rows = run_gradient_suite(tol=args.tol, e2e_tol=args.e2e_tol, verbose=True)
    if args.out:
        out = _out_dir(args.out)
        lines = ["component,variant,tolerance,max_rel_err,status"]
        lines += [
            f"{r.component},{r.variant},{r.tol:.0e},{r.max_rel_err:.6e},{'pass' if r.passed else 'fail'}"
            for r in rows
        ]
        (out / "gradcheck.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {out / 'gradcheck.csv'}")
    failures = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failures)}/{len(rows)} gradient checks passed")
    return 1 if failures else 0


def cmd_bench_knn(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else None
    ks = [int(k) for k in args.ks.split(",")] if args.ks else None
    result = bench_mod.run_knn_bench(sizes=sizes, ks=ks, repeats=args.repeats, verbose=True)
    print(bench_mod.format_table(result))
    for note in result.notes:
        print(f"note: {note}")
    if args.out:
        out = _out_dir(args.out)
        (out / "bench_knn.csv").write_text(bench_mod.to_csv(result))
        print(f"wrote {out / 'bench_knn.csv'}")
    return 0


_SWEEPS = {
    "operator": ("attention_operator", ["mlp", "mlp_pool", "scalar", "vector"]),
    "pos_mode": ("attention_pos_mode", ["none", "absolute", "relative", "relative_attn_only", "relative_feat_only"]),
    "k": ("arch_k", [4, 8, 16, 32, 64]),
}


def cmd_ablate(args) -> int:
    base = _load_run_config(args.config, args.seed)
    field, values = _SWEEPS[args.sweep]
    out = _out_dir(args.out)
    lines = ["variant,oa,macc,miou,final_loss"]
    for value in values:
        cfg = replace(base, **{field: value})
        try:
            cfg.validate()
            net = build_network(cfg.backbone(), seed=cfg.seed)
            result = train(net, cfg.train_scenes(), cfg.optimizer_state(), cfg.iterations)
            report = evaluate(net, cfg.eval_scenes(), cfg.data_num_classes)
            lines.append(f"{value},{report.oa:.6f},{report.macc:.6f},{report.miou:.6f},{result.final_loss:.6f}")
            print(f"{args.sweep}={value}: OA {report.oa:.4f}  mIoU {report.miou:.4f}")
        except (TrainingDiverged, ConfigError) as exc:
            lines.append(f"{value},nan,nan,nan,nan")
            print(f"{args.sweep}={value}: failed ({exc})")
    (out / "ablate.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'ablate.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointattn",
                                     description="Point-cloud attention networks: train, evaluate, verify, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on generated scenes")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--on-train", action="store_true", help="evaluate on the training scenes")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and variant")
    p.add_argument("--out", default=None)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--e2e-tol", type=float, default=1e-3)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench-knn", help="time the kNN engine over a grid of sizes and ks")
    p.add_argument("--sizes", default=None, help="comma-separated point counts")
    p.add_argument("--ks", default=None, help="comma-separated neighbor counts")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench_knn)

    p = sub.add_parser("ablate", help="train and compare attention variants side by side")
    p.add_argument("--config", required=True)
    p.add_argument("--sweep", choices=sorted(_SWEEPS), default="operator")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
