"""Command-line interface: dataset synthesis, training, inference, evaluation
and VGG weight preparation."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import compositor, datapipe, harness, perception, trainer
from .imagecore import load_image, save_image


def _cmd_synth(args) -> int:
    t_paths = sorted(Path(args.transmission_dir).glob("*.png")) + sorted(
        Path(args.transmission_dir).glob("*.jpg")
    )
    r_paths = sorted(Path(args.reflection_dir).glob("*.png")) + sorted(
        Path(args.reflection_dir).glob("*.jpg")
    )
    if not t_paths or not r_paths:
        print("error: empty image pool", file=sys.stderr)
        return 1
    t_pool = [load_image(p) for p in t_paths]
    r_pool = [load_image(p) for p in r_paths]
    cfg = compositor.SynthConfig(
        kernel_sizes=tuple(args.kernel_sizes),
        decay_range=tuple(args.decay_range),
        vignette_strength_range=tuple(args.vignette_range),
        seed=args.seed,
    )
    triples = compositor.synth_dataset(t_pool, r_pool, args.count, cfg)
    out = Path(args.out)
    for sub in ("blended", "transmission", "reflection"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = ["id\tkernel\tdecay\tvignette_cx\tvignette_cy\tvignette_strength"]
    for triple in triples:
        save_image(out / "blended" / f"{triple.sample_id}.png", triple.input)
        save_image(out / "transmission" / f"{triple.sample_id}.png", triple.transmission)
        save_image(out / "reflection" / f"{triple.sample_id}.png", triple.reflection)
        d = triple.draws
        manifest.append(
            f"{triple.sample_id}\t{d.kernel_size}\t{d.decay:.6f}"
            f"\t{d.vignette_center[0]:.6f}\t{d.vignette_center[1]:.6f}\t{d.vignette_strength:.6f}"
        )
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"wrote {len(triples)} samples to {out}")
    return 0


def _cmd_train(args) -> int:
    vgg = perception.load_vgg(args.vgg_weights, args.vgg_sha256)
    synth = []
    real = []
    if args.synth_root:
        index = datapipe.index_dataset(args.synth_root, "synthetic", split="train")
        synth = [datapipe.load_triple(e) for e in index.entries]
    if args.real_root:
        index = datapipe.index_dataset(args.real_root, "real", split="train")
        spec = datapipe.PatchSpec(
            short_side_range=tuple(args.short_side), patches_per_image=args.patches_per_image
        )
        real = datapipe.extract_patches(index, spec, args.seed)
    config = trainer.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        use_feat=not args.no_feat,
        use_adv=not args.no_adv,
        use_excl=not args.no_excl,
        use_refl=not args.no_lr,
        use_grad_norm=not args.no_grad_norm,
        checkpoint_every=args.checkpoint_every,
        deterministic=args.deterministic,
        max_steps=args.max_steps,
    )
    trainer.train(config, synth, real, vgg, args.out, resume=args.resume)
    return 0


def _cmd_infer(args) -> int:
    vgg = perception.load_vgg(args.vgg_weights, args.vgg_sha256)
    state = trainer.load_checkpoint(args.checkpoint, vgg_sha256=vgg.sha256)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        img = load_image(path, linear=args.linear)
        pred_t, pred_r = trainer.infer(state, img, vgg)
        stem = Path(path).stem
        save_image(out / f"{stem}_T.png", pred_t)
        save_image(out / f"{stem}_R.png", pred_r)
        print(f"{path} -> {out / (stem + '_T.png')}, {out / (stem + '_R.png')}")
    return 0


def _cmd_eval(args) -> int:
    vgg = perception.load_vgg(args.vgg_weights, args.vgg_sha256)
    state = trainer.load_checkpoint(args.checkpoint, vgg_sha256=vgg.sha256)
    index = datapipe.index_dataset(args.root, args.kind, split=args.split)
    run = harness.evaluate(
        lambda img: trainer.infer(state, img, vgg), index, checkpoint_id=Path(args.checkpoint).stem
    )
    if args.csv:
        harness.write_csv([run], args.csv)
        print(f"wrote {args.csv}")
    if args.table or not args.csv:
        print(harness.format_table([run]))
    return 0


def _cmd_vgg_weights(args) -> int:
    if args.random is not None:
        digest = perception.save_random_weights(args.out, seed=args.random)
        print(f"wrote SURROGATE (random, non-pretrained) weights to {args.out}")
    else:
        digest = perception.export_torchvision_weights(args.out)
        print(f"wrote ImageNet-pretrained VGG-19 weights to {args.out}")
    print(f"sha256: {digest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layersep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic reflection dataset")
    p.add_argument("--transmission-dir", required=True)
    p.add_argument("--reflection-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel-sizes", type=int, nargs="+", default=[3, 5, 7, 9, 11, 13, 15, 17])
    p.add_argument("--decay-range", type=float, nargs=2, default=[0.6, 1.0])
    p.add_argument("--vignette-range", type=float, nargs=2, default=[0.0, 0.3])
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the separation network")
    p.add_argument("--synth-root")
    p.add_argument("--real-root")
    p.add_argument("--out", required=True)
    p.add_argument("--vgg-weights", required=True)
    p.add_argument("--vgg-sha256")
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=50)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--resume")
    p.add_argument("--patches-per-image", type=int, default=6)
    p.add_argument("--short-side", type=int, nargs=2, default=[256, 480])
    p.add_argument("--no-feat", action="store_true")
    p.add_argument("--no-adv", action="store_true")
    p.add_argument("--no-excl", action="store_true")
    p.add_argument("--no-lr", action="store_true")
    p.add_argument("--no-grad-norm", action="store_true")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="decompose images with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vgg-weights", required=True)
    p.add_argument("--vgg-sha256")
    p.add_argument("--out", required=True)
    p.add_argument("--linear", action="store_true", help="inputs are already linear")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM evaluation over a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vgg-weights", required=True)
    p.add_argument("--vgg-sha256")
    p.add_argument("--root", required=True)
    p.add_argument("--kind", choices=["synthetic", "real"], default="real")
    p.add_argument("--split", default="test")
    p.add_argument("--csv")
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("vgg-weights", help="prepare the perception weights file")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--random", type=int, metavar="SEED",
        help="write deterministic surrogate weights instead of downloading (testing only)",
    )
    p.set_defaults(func=_cmd_vgg_weights)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
