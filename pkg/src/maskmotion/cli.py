"""Command-line interface mirroring the service endpoints."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import aav1, png
from .ablation import MASK_ORDER, STRENGTH_ORDER, VARIANTS, build_eval_cases, run_ablations, train_variants, variant_config
from .dataset import generate_dataset
from .inference import CompositionLayer, CompositionRequest, GenerationRequest, compose, generate
from .rng import Rng
from .training import (
    TrainConfig,
    config_from_dict,
    config_to_dict,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    train,
)

CHECKPOINT_ENV = "MASKMOTION_CHECKPOINT"


def _load_config(path: str | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    return config_from_dict(json.loads(Path(path).read_text()))


def _write_video(video: np.ndarray, out: str) -> None:
    out_path = Path(out)
    if out_path.suffix == ".aav1":
        aav1.write_tensor(out_path, video)
    else:
        out_path.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(video):
            (out_path / f"frame_{i:03d}.png").write_bytes(png.encode_gray(frame[0]))


def cmd_dataset_gen(args) -> int:
    items = generate_dataset(args.count, args.size, args.frames, Rng(args.seed))
    save_dataset(args.out, items)
    print(f"wrote {len(items)} videos to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    items = load_dataset(args.data)
    log_path = args.log or (str(Path(args.out)) + ".log.jsonl")
    model, metrics, meta = train(cfg, items, log_path=log_path)
    save_checkpoint(args.out, model, meta)
    final = metrics[-1].l if metrics else float("nan")
    print(f"trained {cfg.iterations} iterations; final loss {final:.5f}; checkpoint at {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    items = load_dataset(args.data)
    variants_dir = Path(args.variants)
    variants_dir.mkdir(parents=True, exist_ok=True)

    models = {}
    for name in VARIANTS:
        ckpt = variants_dir / f"{name}.aav1"
        if ckpt.exists():
            models[name], _ = load_checkpoint(ckpt)
        elif args.train_missing:
            model, _, meta = train(variant_config(cfg, name), items)
            save_checkpoint(ckpt, model, meta)
            models[name] = model
            print(f"trained variant {name}")
    eval_items = load_dataset(args.eval_data) if args.eval_data else items
    cases = build_eval_cases(eval_items, Rng(args.seed))
    report = run_ablations(models, cases, steps=args.steps)
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=1))
    for name in MASK_ORDER:
        print(f"{name:14s} mask precision {report.rows[name].mask_precision:.3f}")
    for name in STRENGTH_ORDER:
        print(f"{name:14s} strength error {report.rows[name].strength_error:.6f}")
    return 0


def cmd_eval(args) -> int:
    from .ablation import evaluate_variant

    model, _ = load_checkpoint(args.ckpt)
    items = load_dataset(args.data)
    cases = build_eval_cases(items, Rng(args.seed))
    result = evaluate_variant("full", model, cases, steps=args.steps)
    report = {
        "mask_precision": result.mask_precision,
        "strength_error": result.strength_error,
        "no_motion_count": result.no_motion_count,
        "cases": len(cases),
    }
    Path(args.report).write_text(json.dumps(report, indent=1))
    print(json.dumps(report))
    return 0


def _checkpoint_arg(args) -> str:
    ckpt = args.ckpt or os.environ.get(CHECKPOINT_ENV)
    if not ckpt:
        sys.exit(f"no checkpoint: pass --ckpt or set {CHECKPOINT_ENV}")
    return ckpt


def cmd_generate(args) -> int:
    model, _ = load_checkpoint(_checkpoint_arg(args))
    image = png.decode_gray(Path(args.image).read_bytes())
    mask = png.decode_mask(Path(args.mask).read_bytes()) if args.mask else None
    req = GenerationRequest(
        image=image,
        mask=mask,
        class_id=args.class_id,
        strength_value=args.strength,
        frames=args.frames,
        steps=args.steps,
        seed=args.seed,
    )
    video = generate(req, model)
    _write_video(video, args.out)
    print(f"wrote {video.shape[0]} frames to {args.out}")
    return 0


def cmd_compose(args) -> int:
    model, _ = load_checkpoint(_checkpoint_arg(args))
    image = png.decode_gray(Path(args.image).read_bytes())
    layer_specs = json.loads(Path(args.layers).read_text())
    layers = [
        CompositionLayer(
            mask=png.decode_mask(Path(sp["mask"]).read_bytes()),
            class_id=int(sp["class_id"]),
            strength_value=float(sp.get("strength", 0.0)),
        )
        for sp in layer_specs
    ]
    req = CompositionRequest(
        image=image, layers=layers, frames=args.frames, steps=args.steps, seed=args.seed
    )
    video = compose(req, model)
    _write_video(video, args.out)
    print(f"wrote {video.shape[0]} frames to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ckpt = args.ckpt or os.environ.get(CHECKPOINT_ENV)
    app = create_app(checkpoint_path=ckpt, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maskmotion")
    sub = p.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="dataset commands")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    g = ds_sub.add_parser("gen", help="generate a moving-shapes dataset")
    g.add_argument("--count", type=int, default=128)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--frames", type=int, default=24)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_dataset_gen)

    t = sub.add_parser("train", help="train a denoiser")
    t.add_argument("--config", default=None, help="JSON file mirroring TrainConfig")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", default=None, help="line-delimited JSON metrics path")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="train/evaluate ablation variants")
    a.add_argument("--variants", required=True, help="directory of variant checkpoints")
    a.add_argument("--data", required=True)
    a.add_argument("--eval-data", default=None)
    a.add_argument("--report", required=True)
    a.add_argument("--config", default=None)
    a.add_argument("--steps", type=int, default=50)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--train-missing", action="store_true")
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--steps", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    gen = sub.add_parser("generate", help="animate a reference image")
    gen.add_argument("--ckpt", default=None)
    gen.add_argument("--image", required=True)
    gen.add_argument("--mask", default=None)
    gen.add_argument("--class-id", type=int, default=0)
    gen.add_argument("--strength", type=float, default=0.0)
    gen.add_argument("--frames", type=int, default=8)
    gen.add_argument("--steps", type=int, default=50)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help=".aav1 file or directory for PNG frames")
    gen.set_defaults(func=cmd_generate)

    c = sub.add_parser("compose", help="layered multi-region animation")
    c.add_argument("--ckpt", default=None)
    c.add_argument("--image", required=True)
    c.add_argument("--layers", required=True, help="JSON list of {mask, class_id, strength}")
    c.add_argument("--frames", type=int, default=8)
    c.add_argument("--steps", type=int, default=50)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compose)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--ckpt", default=None)
    s.add_argument("--static", default=None, help="directory of UI assets to serve at /")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
