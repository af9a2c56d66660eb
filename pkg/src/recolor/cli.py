"""Command-line entry point: gen, train, infer, eval, check.

Exit codes are a stable contract: 0 success, 1 runtime or data error,
2 usage error.  The RECOLOR_LOG environment variable sets the log level;
every command logs its fully resolved configuration before doing work.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .env import EnvConfig, generate_synthetic, load_dataset, save_dataset
from .metrics import METRIC_NAMES, EvalOptions, evaluate, save_report
from .net import NetSpec, load_checkpoint, save_checkpoint
from .pngio import save_image, save_label_overlay, save_labels
from .policy import OptimConfig, PolicyParams, infer, train
from .verify import (
    check_gradients,
    check_reward_oracle,
    check_telescoping,
    run_all_checks,
)

RUN_CONFIG_VERSION = 1
log = logging.getLogger("recolor")


def load_run_config(path):
    """Read the {env, net, optim} JSON document; unknown sections rejected."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: run config must be a JSON object")
    version = doc.get("format_version", RUN_CONFIG_VERSION)
    if version != RUN_CONFIG_VERSION:
        raise ValueError(f"{path}: unsupported config version {version!r}")
    unknown = set(doc) - {"format_version", "env", "net", "optim"}
    if unknown:
        raise ValueError(f"{path}: unknown config sections {sorted(unknown)}")
    env_cfg = EnvConfig.from_dict(doc.get("env", {}))
    net_spec = NetSpec.from_dict(doc["net"]) if "net" in doc else None
    optim_cfg = OptimConfig.from_dict(doc.get("optim", {}))
    return env_cfg, net_spec, optim_cfg


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        size = (int(h), int(w))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"size must look like 32x32, got {text!r}") from None
    if size[0] < 1 or size[1] < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return size


def _parse_metrics(text: str) -> tuple[str, ...]:
    aliases = {"voi": ("voi_split", "voi_merge"), "coverage": ("mwcov", "mucov")}
    out: list[str] = []
    for token in text.split(","):
        token = token.strip()
        if token in aliases:
            out.extend(aliases[token])
        elif token in METRIC_NAMES:
            out.append(token)
        else:
            raise argparse.ArgumentTypeError(f"unknown metric {token!r}")
    return tuple(dict.fromkeys(out))


def cmd_gen(args) -> int:
    height, width = args.size
    shapes = tuple(args.shapes.split(","))
    pairs = generate_synthetic(args.count, height, width,
                               max_objects=args.max_objects,
                               shape_kinds=shapes,
                               noise_level=args.noise, seed=args.seed)
    manifest = {
        "format_version": 1,
        "command": "gen",
        "count": args.count,
        "height": height,
        "width": width,
        "max_objects": args.max_objects,
        "shape_kinds": list(shapes),
        "noise_level": args.noise,
        "seed": args.seed,
    }
    log.info("gen config: %s", json.dumps(manifest, sort_keys=True))
    save_dataset(pairs, args.out, manifest=manifest)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _eval_callback(dataset, env_cfg, min_area):
    """Greedy-inference metrics over the training set, for the metrics log."""
    from .metrics import arand, sbd

    def eval_fn(policy: PolicyParams) -> dict:
        sbds, arands = [], []
        for pair in dataset:
            labels, _ = infer(policy, pair.image, env_cfg, min_area=min_area)
            sbds.append(sbd(labels, pair.labels))
            arands.append(arand(labels, pair.labels))
        return {"eval_sbd": float(np.mean(sbds)),
                "eval_arand": float(np.mean(arands))}
    return eval_fn


def cmd_train(args) -> int:
    if args.config:
        env_cfg, net_spec, optim_cfg = load_run_config(args.config)
    else:
        env_cfg, net_spec, optim_cfg = EnvConfig(), None, OptimConfig()
    seed = args.seed if args.seed is not None else env_cfg.seed
    dataset = load_dataset(args.data)
    if not dataset:
        raise ValueError(f"no image/label pairs found in {args.data}")
    log.info("train config: env=%s optim=%s seed=%d updates=%d workers=%d",
             json.dumps(env_cfg.to_dict(), sort_keys=True),
             json.dumps(optim_cfg.to_dict(), sort_keys=True),
             seed, args.steps, args.workers)
    eval_fn = (_eval_callback(dataset, env_cfg, args.min_area)
               if args.eval_every else None)
    policy, metrics_log = train(
        dataset, env_cfg, spec=net_spec, optim=optim_cfg, updates=args.steps,
        workers=args.workers, seed=seed, eval_every=args.eval_every,
        eval_fn=eval_fn,
        divergence_checkpoint=args.out + ".diverged" if args.out else None)
    save_checkpoint(args.out, policy.vector, policy.spec, seed,
                    policy.steps_trained)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for entry in metrics_log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(f"trained {policy.steps_trained} updates; checkpoint at {args.out}")
    return 0


def cmd_infer(args) -> int:
    vector, header = load_checkpoint(args.checkpoint)
    spec = NetSpec.from_dict(header["net"])
    env_cfg = load_run_config(args.config)[0] if args.config else EnvConfig()
    seed = args.seed if args.seed is not None else env_cfg.seed
    policy = PolicyParams(vector, spec, header["seed"], header["steps"])
    rng = np.random.default_rng(seed)
    names = sorted(f for f in os.listdir(args.data)
                   if f.endswith(".png") and not f.endswith("_label.png"))
    if not names:
        raise ValueError(f"no images found in {args.data}")
    for sub in ("labels", "planes", "color"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)
    log.info("infer config: env=%s checkpoint=%s mode=%s",
             json.dumps(env_cfg.to_dict(), sort_keys=True),
             args.checkpoint, args.mode)
    from .pngio import load_image

    for name in names:
        sample_id = name[:-4]
        image = load_image(os.path.join(args.data, name))
        expect = image.shape[2] + env_cfg.steps
        if spec.in_channels != expect:
            raise ValueError(
                f"checkpoint expects {spec.in_channels} input channels but "
                f"{name} with {env_cfg.steps} steps gives {expect}")
        labels, planes = infer(policy, image, env_cfg, mode=args.mode,
                               rng=rng, min_area=args.min_area)
        save_labels(os.path.join(args.out, "labels", f"{sample_id}.png"), labels)
        save_label_overlay(os.path.join(args.out, "color", f"{sample_id}.png"),
                           labels)
        for t in range(planes.shape[2]):
            save_image(os.path.join(args.out, "planes",
                                    f"{sample_id}_step{t}.png"),
                       planes[:, :, t].astype(np.float64))
    print(f"inferred {len(names)} images into {args.out}")
    return 0


def cmd_eval(args) -> int:
    options = EvalOptions(min_area=args.min_area,
                          connectivity=args.connectivity,
                          iou_threshold=args.iou_threshold,
                          foreground_only=not args.all_pixels,
                          use_log2=args.log2,
                          metrics=args.metrics)
    log.info("eval options: %s", json.dumps(options.to_dict(), sort_keys=True))
    report = evaluate(args.pred, args.gt, options)
    if args.out:
        save_report(report, args.out)
    print(json.dumps(report["aggregate"], indent=2, sort_keys=True))
    return 0


def cmd_check(args) -> int:
    if args.mode == "reward-oracle":
        report = check_reward_oracle(cases=args.cases, seed=args.seed)
    elif args.mode == "grad":
        report = check_gradients(seed=args.seed)
    elif args.mode == "telescoping":
        report = check_telescoping(seed=args.seed)
    else:
        report = run_all_checks(seed=args.seed, cases=args.cases)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recolor",
        description="iterative binary-coloring instance segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=_parse_size, default=(32, 32))
    p.add_argument("--max-objects", type=int, default=4)
    p.add_argument("--shapes", default="ellipse,rectangle,blob")
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a policy on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int, default=1000,
                   help="number of parameter updates")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="JSON-lines metrics log path")
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--min-area", type=int, default=4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a checkpoint over images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-area", type=int, default=4)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.add_argument("--metrics", type=_parse_metrics, default=METRIC_NAMES)
    p.add_argument("--min-area", type=int, default=4)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--all-pixels", action="store_true",
                   help="VOI/ARand over all pixels, not just GT foreground")
    p.add_argument("--log2", action="store_true", help="VOI in bits")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run randomized self-verification")
    p.add_argument("--mode", choices=("reward-oracle", "grad", "telescoping",
                                      "all"), default="all")
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("RECOLOR_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, FloatingPointError,
            json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
