"""Command-line entry points: train, infer, evaluate, mask-gen, make-data, serve.

Exit codes: 0 ok, 2 usage error, 3 config error, 4 runtime failure.
Config override flags mirror the flat config keys with dotted names,
e.g. ``--weights.lambda_id 0.2``.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from . import config as cfgmod
from . import data, masks
from .errors import NumericError, ParameterError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

_OVERRIDE_KEYS = list(cfgmod._SCALARS) + ["channels", "phi"]


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    for key in _OVERRIDE_KEYS:
        parser.add_argument(f"--{key}", dest=f"ov::{key}", metavar="V", default=None)


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    for key in _OVERRIDE_KEYS:
        val = getattr(args, f"ov::{key}", None)
        if val is not None:
            out[key] = val
    return out


def _load_config(path: str, overrides: dict[str, str]):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            flat = cfgmod.parse_flat_text(fh.read())
        flat.update(overrides)
        return cfgmod.train_config_from_flat(flat)
    except (ParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


def cmd_train(args) -> int:
    cfg = _load_config(args.config, _collect_overrides(args))
    from .training import train

    dataset = data.load_image_folder(args.data, cfg.resolution)
    resume_from = args.resume
    if resume_from == "latest":
        candidates = sorted(glob.glob(os.path.join(cfg.run_dir, "ckpt_*.ckpt")))
        if not candidates:
            raise ConfigError(f"no checkpoint to resume from in {cfg.run_dir}")
        resume_from = candidates[-1]
    state = train(cfg, dataset, resume_from=resume_from)
    print(f"trained to step {state.step}; checkpoints in {cfg.run_dir}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from PIL import Image

    from .service import InferenceEngine

    engine = InferenceEngine(args.checkpoint)
    image = np.asarray(Image.open(args.input).convert("RGB"), dtype=np.uint8)
    mask = masks.load_mask_png(args.mask)
    exemplar = np.asarray(Image.open(args.exemplar).convert("RGB"), dtype=np.uint8)
    exemplar2 = None
    if args.exemplar2:
        exemplar2 = np.asarray(Image.open(args.exemplar2).convert("RGB"), dtype=np.uint8)
    phi = [int(c) for c in args.phi] if args.phi else None
    crossover = tuple(args.crossover) if args.crossover else None
    out = engine.inpaint_arrays(
        image, mask, exemplar, exemplar2=exemplar2, crossover=crossover,
        phi=phi, psi=args.psi, seed=args.seed, allow_resize=args.allow_resize,
    )
    Image.fromarray(out).save(args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import torch

    from .evaluation import FeatureExtractor, evaluate
    from .service import InferenceEngine

    engine = InferenceEngine(args.checkpoint)
    dataset = data.load_image_folder(args.data, engine.resolution)
    extractor = FeatureExtractor()
    rng = np.random.default_rng(args.seed)

    def inpaint_fn(i_gt, mask, i_exe):
        return engine.inpaint_tensors(i_gt, mask, i_exe, seed=args.seed)

    report = evaluate(
        inpaint_fn, dataset.images, extractor, rng,
        brush=cfgmod.default_brush_params(engine.resolution),
        n_samples=args.samples,
    )
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"wrote {args.output}")
    for b in report.bins:
        print(f"  {b.name}: fid={b.fid:.4f} u_ids={b.u_ids:.3f} p_ids={b.p_ids:.3f}")
    return EXIT_OK


def cmd_mask_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    p = cfgmod.default_brush_params(min(args.height, args.width))
    if args.kind == "freeform":
        m = masks.sample_freeform(rng, args.height, args.width, p)
    elif args.kind == "brush":
        m = masks.sample_brush_strokes(rng, args.height, args.width, p)
    elif args.kind == "rect":
        m = masks.sample_rectangles(rng, args.height, args.width)
    else:
        m = masks.center_mask(args.height, args.width, args.frac)
    masks.save_mask_png(args.output, m)
    print(f"wrote {args.output} (masked ratio {masks.masked_ratio(m):.3f})")
    return EXIT_OK


def cmd_make_data(args) -> int:
    paths = data.make_toy_corpus(args.output, args.count, args.identities, args.side, args.seed)
    print(f"wrote {len(paths)} images to {args.output}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.checkpoint, host=args.host, port=args.port, gallery_dir=args.gallery)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exinpaint",
                                     description="exemplar-guided facial inpainting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--data", required=True, help="image folder")
    p_train.add_argument("--resume", default=None,
                         help="checkpoint path or 'latest'")
    _add_override_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_infer = sub.add_parser("infer", help="single inpainting to an output file")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--input", required=True)
    p_infer.add_argument("--mask", required=True)
    p_infer.add_argument("--exemplar", required=True)
    p_infer.add_argument("--exemplar2", default=None)
    p_infer.add_argument("--crossover", nargs=2, type=int, default=None, metavar=("I", "J"))
    p_infer.add_argument("--phi", default=None, help="bitstring layer selector")
    p_infer.add_argument("--psi", type=float, default=1.0)
    p_infer.add_argument("--seed", type=int, default=0)
    p_infer.add_argument("--allow-resize", action="store_true")
    p_infer.add_argument("--output", required=True)
    p_infer.set_defaults(fn=cmd_infer)

    p_eval = sub.add_parser("evaluate", help="binned metric report for a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--output", required=True)
    p_eval.add_argument("--samples", type=int, default=64)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(fn=cmd_evaluate)

    p_mask = sub.add_parser("mask-gen", help="sample a mask to a PNG file")
    p_mask.add_argument("--height", type=int, default=64)
    p_mask.add_argument("--width", type=int, default=64)
    p_mask.add_argument("--kind", choices=("freeform", "brush", "rect", "center"),
                        default="freeform")
    p_mask.add_argument("--frac", type=float, default=0.5)
    p_mask.add_argument("--seed", type=int, default=0)
    p_mask.add_argument("--output", required=True)
    p_mask.set_defaults(fn=cmd_mask_gen)

    p_data = sub.add_parser("make-data", help="synthesize the toy face corpus")
    p_data.add_argument("--output", required=True)
    p_data.add_argument("--count", type=int, default=512)
    p_data.add_argument("--identities", type=int, default=24)
    p_data.add_argument("--side", type=int, default=64)
    p_data.add_argument("--seed", type=int, default=0)
    p_data.set_defaults(fn=cmd_make_data)

    p_serve = sub.add_parser("serve", help="run the HTTP inference service")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--gallery", default=None, help="folder served at /exemplars")
    p_serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, NumericError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
