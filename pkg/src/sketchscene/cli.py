"""Command-line front end.

Subcommands cover the whole artifact lifecycle: synthesize the glyph
corpus, run the three training stages, build and query the embedding
index, generate layouts, evaluate, and serve the HTTP API.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_model
from .config import ConfigError, TrainConfig, load_config
from .dataset import (DatasetConfig, DatasetError, dataset_hash,
                      generate_dataset, load_dataset, write_pgm)
from .evaluate import generation_report, retrieval_report
from .layout import colorize, compose_layout, write_ppm
from .retrieval import EmbeddingIndex, build_index
from .train import TrainError, train_stage1, train_stage2, train_stage3


def _resolve_config(args) -> TrainConfig:
    config = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def _load_scene(data_dir, scene_id):
    for comp in load_dataset(data_dir):
        if comp.scene_id == scene_id:
            return comp
    raise DatasetError(f"scene {scene_id!r} not found under {data_dir}")


def cmd_synth_data(args) -> int:
    config = _resolve_config(args)
    dcfg = DatasetConfig(train_scenes=args.train_scenes, val_scenes=args.val_scenes,
                         test_scenes=args.test_scenes,
                         min_class_instances=args.min_class_instances)
    generate_dataset(config.seed, dcfg, args.out)
    print(dataset_hash(args.out))
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    out = Path(args.out)
    if args.stage == 1:
        path = train_stage1(args.data, config, out)
    elif args.stage == 2:
        start = args.from_ckpt
        if start is None and (out / "stage1.ckpt").exists():
            start = out / "stage1.ckpt"
        path = train_stage2(args.data, config, out, olr_ckpt=start)
    else:
        start = args.from_ckpt
        if start is None and (out / "stage2.ckpt").exists():
            start = out / "stage2.ckpt"
        path = train_stage3(args.data, config, out, start)
    print(path)
    return 0


def cmd_build_index(args) -> int:
    model, _ = load_model(args.ckpt)
    corpus = load_dataset(args.data, split=args.split, kind="photo")
    index = build_index(corpus, model)
    index.save(args.out)
    print(f"{args.out}: {len(index)} scenes")
    return 0


def cmd_search(args) -> int:
    model, _ = load_model(args.ckpt)
    index = EmbeddingIndex.load(args.index)
    query = _load_scene(args.data, args.scene)
    hits = index.search(model.scene_embedding(query), args.k)
    rows = [{"query_id": args.scene, "rank": i + 1, "scene_id": sid,
             "distance": dist} for i, (sid, dist) in enumerate(hits)]
    text = json.dumps(rows, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_generate(args) -> int:
    model, _ = load_model(args.ckpt)
    comp = _load_scene(args.data, args.scene)
    out = model.synthesize(comp)
    layout = compose_layout(out["boxes"], list(out["masks"]), out["class_ids"],
                            comp.background)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pgm = out_dir / f"{args.scene}.layout.pgm"
    ppm = out_dir / f"{args.scene}.layout.ppm"
    meta = out_dir / f"{args.scene}.json"
    write_pgm(pgm, layout.astype("uint8"))
    write_ppm(ppm, colorize(layout))
    meta.write_text(json.dumps(
        {"scene_id": args.scene, "boxes": out["boxes"],
         "class_ids": out["class_ids"]}, indent=1) + "\n")
    print(f"{pgm}\n{ppm}\n{meta}")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.ckpt)
    if args.task == "retrieval":
        report = retrieval_report(args.data, model, split=args.split)
        headline = {k: report[k] for k in ("recall@1", "recall@5", "recall@10")}
    else:
        report = generation_report(args.data, model, split=args.split)
        headline = {k: report[k] for k in
                    ("mean_box_giou", "mean_mask_iou", "mean_layout_acc")}
    Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(headline))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(args.ckpt, args.index, args.data,
                     cors_origin=args.cors_origin)
    uvicorn.run(app, host=args.addr, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON training config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the config seed")

    parser = argparse.ArgumentParser(
        prog="sketchscene",
        description="Sketch-scene search and layout synthesis on glyph scenes.",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", parents=[common],
                       help="generate the glyph-scene corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train-scenes", type=int, default=600)
    p.add_argument("--val-scenes", type=int, default=100)
    p.add_argument("--test-scenes", type=int, default=200)
    p.add_argument("--min-class-instances", type=int, default=40)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", parents=[common], help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--from", dest="from_ckpt", default=None,
                   help="starting checkpoint (defaults to the previous stage's)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-index", parents=[common],
                       help="embed a photo corpus into an index file")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("search", parents=[common],
                       help="query the index with a dataset scene")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("generate", parents=[common],
                       help="synthesize a layout for a dataset scene")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=[common], help="write a JSON report")
    p.add_argument("--task", choices=("retrieval", "generation"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP API")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--addr", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--cors-origin", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, TrainError, CheckpointError, ConfigError,
            ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
