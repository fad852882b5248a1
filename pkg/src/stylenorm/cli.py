"""``stylenorm`` command line: verify, gradcheck, bench, train, translate, synth."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path


def _cmd_verify(args) -> int:
    from .verify import run_verify

    return run_verify()


def _cmd_gradcheck(args) -> int:
    from .gradcheck import GRADCHECK_CASES, run_gradcheck

    ops = args.op or None
    if ops:
        unknown = [o for o in ops if o not in GRADCHECK_CASES]
        if unknown:
            print(f"unknown op(s): {', '.join(unknown)}", file=sys.stderr)
            return 2
    reports = run_gradcheck(ops, h=args.h, tol=args.tol, seed=args.seed)
    for r in reports:
        print(r.line())
    return 0 if all(r.passed for r in reports) else 1


def _cmd_bench(args) -> int:
    from .bench import parse_shapes, run_bench, write_csv

    shapes = parse_shapes(args.shapes)
    kernels = [int(k) for k in args.kernels.split(",")]
    results = run_bench(shapes, kernels, reps=args.reps, seed=args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(results, fh)
    write_csv(results, sys.stdout)
    return 0


def _cmd_train(args) -> int:
    from .training import config_dict, load_config, save_checkpoint, seed_from_env, train

    model_cfg, train_cfg, weights = load_config(args.config)
    train_cfg = replace(train_cfg, seed=seed_from_env(train_cfg.seed))
    if args.steps is not None:
        train_cfg = replace(train_cfg, steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config_dict(model_cfg, train_cfg, weights), indent=2,
                                                sort_keys=True) + "\n")
    model, history = train(model_cfg, train_cfg, weights, metrics_path=out / "metrics.csv",
                           log_every=args.log_every)
    save_checkpoint(out / "checkpoint", model, {"steps": train_cfg.steps, "seed": train_cfg.seed})
    last = history[-1] if history else {}
    print(json.dumps({"steps": len(history), "final": last}, sort_keys=True))
    return 0


def _cmd_translate(args) -> int:
    from .io import load_image_ppm, save_image_ppm
    from .nets import translate_one
    from .training import load_checkpoint

    model = load_checkpoint(args.checkpoint)
    out = translate_one(model, load_image_ppm(args.content), load_image_ppm(args.style), args.direction)
    save_image_ppm(args.out, out)
    return 0


def _cmd_synth(args) -> int:
    from .io import save_image_ppm
    from .synth import SyntheticDomainSpec, make_synthetic_dataset

    spec = SyntheticDomainSpec.from_dict(json.loads(Path(args.spec).read_text())) if args.spec else SyntheticDomainSpec()
    spec = replace(spec, seed=_env_seed(spec.seed))
    a, b = make_synthetic_dataset(spec)
    out = Path(args.out)
    for name, images in (("A", a), ("B", b)):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            save_image_ppm(d / f"{i:05d}.ppm", img[None])
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(a)} + {len(b)} images to {out}")
    return 0


def _env_seed(seed: int) -> int:
    from .training import seed_from_env

    return seed_from_env(seed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stylenorm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", help="run the invariant property battery")
    s.set_defaults(func=_cmd_verify)

    s = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    s.add_argument("--op", action="append", metavar="NAME", help="restrict to this op (repeatable)")
    s.add_argument("--h", type=float, default=1e-5)
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_gradcheck)

    s = sub.add_parser("bench", help="time adaptive_conv against the loop oracle")
    s.add_argument("--shapes", default="1x8x16x16", help="comma list of NxCxHxW")
    s.add_argument("--kernels", default="1,3,7", help="comma list of odd kernel sizes")
    s.add_argument("--reps", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="also write the CSV here")
    s.set_defaults(func=_cmd_bench)

    s = sub.add_parser("train", help="train the desk translation model")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, help="override train.steps")
    s.add_argument("--log-every", type=int, default=100)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("translate", help="translate one PPM image with a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--content", required=True)
    s.add_argument("--style", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--direction", choices=("AtoB", "BtoA"), default="AtoB")
    s.set_defaults(func=_cmd_translate)

    s = sub.add_parser("synth", help="write the synthetic two-domain image set as PPM files")
    s.add_argument("--spec", help="JSON SyntheticDomainSpec (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
