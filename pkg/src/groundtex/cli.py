"""Command-line front end.

Subcommands: synth, texture, slic, train, infer, eval, gradcheck.
Exit codes: 0 success, 1 computation failure, 2 bad input or config.
Every command is deterministic given its config (seeds included).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baseline, descriptor, evaluation, imaging, models, nn, pipeline, scenes, superpixel
from .config import ConfigError, apply_overrides, load_config

GRADCHECK_BOUND = 1e-5


class UsageError(Exception):
    """Bad input that should exit with code 2."""


def _cfg(args):
    cfg = load_config(args.config)
    return apply_overrides(cfg, seed=getattr(args, "seed", None),
                           block_size=getattr(args, "block_size", None))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


_SCENES = {
    "six-planes": lambda cfg: scenes.six_plane_scene(cfg.scene.width, cfg.scene.height),
    "flat": lambda cfg: scenes.flat_ground_scene(cfg.scene.width, cfg.scene.height),
    "lateral-slope": lambda cfg: scenes.lateral_slope_scene(cfg.scene.width, cfg.scene.height),
    "random": lambda cfg: scenes.random_scene(cfg.scene.seed, cfg.scene.width, cfg.scene.height),
}


def cmd_synth(args) -> int:
    cfg = _cfg(args)
    out = _outdir(args)
    spec = _SCENES[args.scene](cfg)
    cam = imaging.CameraModel.default(
        spec.width, spec.height, cfg.camera.focal_length_px,
        cfg.camera.baseline_m, cfg.camera.camera_height_m)
    disp, mask = scenes.synth_scene(spec, cam)
    rgb = scenes.render_rgb(spec, seed=cfg.scene.seed)
    imaging.save_disparity(out / "disparity.png", disp)
    imaging.save_mask(out / "mask.png", mask)
    imaging.save_rgb(out / "rgb.png", rgb)
    imaging.save_rgb(out / "overlay.png", imaging.render_overlay(rgb, mask))
    print(f"wrote scene '{args.scene}' ({spec.height}x{spec.width}) to {out}")
    return 0


def cmd_texture(args) -> int:
    cfg = _cfg(args)
    disp = imaging.load_disparity(args.disparity, format=args.format)
    out = _outdir(args)
    tex = descriptor.texture_map(disp, cfg.descriptor)
    binary = descriptor.binarize(tex, params=cfg.descriptor)
    descriptor.save_texture_pfm(out / "texture.pfm", tex)
    descriptor.save_texture_png(out / "texture.png", tex)
    descriptor.save_binary_png(out / "binary.png", binary)
    print(f"wrote texture maps (block {cfg.descriptor.block_size}) to {out}")
    return 0


def cmd_slic(args) -> int:
    cfg = _cfg(args)
    img = imaging.load_rgb(args.image)
    out = _outdir(args)
    labeling = superpixel.slic_segment(img, cfg.slic)
    superpixel.save_labels_png(out / "labels.png", labeling)
    superpixel.save_boundary_overlay(out / "boundaries.png", img, labeling)
    print(f"wrote {labeling.region_count} superpixels to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _cfg(args)
    out = _outdir(args)
    entries = pipeline.read_manifest(args.manifest)
    if not entries:
        raise UsageError(f"manifest {args.manifest} lists no images")
    images = pipeline.load_manifest_images(args.manifest)
    if args.task == "ground":
        samples = pipeline.extract_ground_samples(
            images, cfg.slic, cfg.descriptor, seed=cfg.train.seed)
        net = models.build_ground_net(seed=cfg.train.seed)
    else:
        road_inputs = [(rgb, descriptor.texture_map(disp, cfg.descriptor), mask)
                       for rgb, disp, mask in images]
        samples = pipeline.extract_road_samples(road_inputs, seed=cfg.train.seed)
        net = models.build_fusion_net(seed=cfg.train.seed)
    if not samples:
        raise UsageError("extraction produced no training samples")
    data = pipeline.to_training_set(samples)
    print(f"training {args.task} net on {len(data)} samples")
    net, history = pipeline.train(net, data, cfg.train, log=print)
    nn.save_checkpoint(out / f"checkpoint_{args.task}.gtx", net)
    pipeline.write_metrics_csv(out / "metrics.csv", history)
    print(f"wrote checkpoint and metrics to {out}")
    return 0


def cmd_infer(args) -> int:
    cfg = _cfg(args)
    out = _outdir(args)
    net = nn.load_checkpoint(args.checkpoint)
    rgb = imaging.load_rgb(args.image)
    disp = imaging.load_disparity(args.disparity, format=args.format)
    if args.task == "ground":
        if "ground" not in net.arch:
            raise UsageError(f"checkpoint arch {net.arch!r} is not a ground net")
        mask = pipeline.detect_ground(rgb, disp, net, cfg.slic, cfg.descriptor)
    else:
        if "fusion" not in net.arch:
            raise UsageError(f"checkpoint arch {net.arch!r} is not a fusion net")
        tex = descriptor.texture_map(disp, cfg.descriptor)
        mask = pipeline.segment_road(rgb, tex, net)
    imaging.save_mask(out / "mask.png", mask)
    imaging.save_rgb(out / "overlay.png", imaging.render_overlay(rgb, mask))
    print(f"wrote {args.task} mask to {out}")
    return 0


def cmd_eval(args) -> int:
    out = _outdir(args)
    if args.list:
        rows = []  # (scene, method, pred path, gt path)
        for lineno, line in enumerate(Path(args.list).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise UsageError(f"{args.list}:{lineno}: expected 'scene method pred gt'")
            rows.append(parts)
        base = Path(args.list).parent
        scene_names = list(dict.fromkeys(r[0] for r in rows))
        method_names = list(dict.fromkeys(r[1] for r in rows))
        gt_masks = {}
        preds = {m: {} for m in method_names}
        for scene, method, p, g in rows:
            gt_masks[scene] = imaging.load_mask(base / g)
            preds[method][scene] = imaging.load_mask(base / p)
        for m in method_names:
            if set(preds[m]) != set(scene_names):
                raise UsageError(f"method {m!r} is missing scenes")
        pred_lists = {m: [preds[m][s] for s in scene_names] for m in method_names}
        gt_list = [gt_masks[s] for s in scene_names]
    else:
        if not args.pred:
            raise UsageError("eval needs --list or at least one --pred name=path")
        if args.gt is None:
            raise UsageError("eval needs --gt alongside --pred")
        gt_list = [imaging.load_mask(args.gt)]
        scene_names = ["scene"]
        pred_lists = {}
        for spec_str in args.pred:
            if "=" not in spec_str:
                raise UsageError(f"--pred wants name=path, got {spec_str!r}")
            name, path = spec_str.split("=", 1)
            pred_lists[name] = [imaging.load_mask(path)]
    for method, masks in pred_lists.items():
        for m, g in zip(masks, gt_list):
            if m.shape != g.shape:
                raise UsageError(f"method {method!r}: prediction {m.shape} vs gt {g.shape}")
    report = evaluation.compare_report(pred_lists, gt_list, scene_names)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.to_csv())
    print(report.to_text(), end="")
    return 0


def cmd_gradcheck(args) -> int:
    rng_seed = args.seed if args.seed is not None else 0
    checks = []
    if args.arch in ("all", "layers"):
        checks += _layer_kind_checks(rng_seed)
    if args.arch in ("all", "ground"):
        checks.append(("ground-small", models.build_small_ground_like(rng_seed),
                       _rand_input((1, 16, 16), rng_seed), None))
        checks.append(("ground-full-sampled", models.build_ground_net(rng_seed),
                       _rand_input((1, 32, 32), rng_seed), 12))
    if args.arch in ("all", "fusion"):
        checks.append(("fusion-small", models.build_small_fusion_like(rng_seed),
                       (_rand_input((3, 14, 14), rng_seed), _rand_input((1, 14, 14), rng_seed + 1)), None))
        checks.append(("fusion-full-sampled", models.build_fusion_net(rng_seed),
                       (_rand_input((3, 30, 30), rng_seed), _rand_input((1, 30, 30), rng_seed + 1)), 8))
    worst = 0.0
    for name, net, x, max_per in checks:
        res = nn.grad_check(net, x, 1, max_per_param=max_per, seed=rng_seed)
        status = "ok" if res.max_rel_error < GRADCHECK_BOUND else "FAIL"
        print(f"gradcheck {name}: max_rel={res.max_rel_error:.3e} "
              f"checked={res.checked} excluded={len(res.excluded)} [{status}]")
        worst = max(worst, res.max_rel_error)
    if worst >= GRADCHECK_BOUND:
        print(f"gradient check FAILED: {worst:.3e} >= {GRADCHECK_BOUND}")
        return 1
    return 0


def _rand_input(shape, seed):
    return np.random.default_rng(seed).normal(0.0, 0.6, size=shape).astype(np.float64)


def _layer_kind_checks(seed):
    rng = np.random.default_rng(seed)
    conv_net = nn.Network([nn.Conv2d(2, 3, 3, rng=rng), nn.Dense(3 * 2 * 2, 2, rng=rng)],
                          input_shapes=((2, 4, 4),))
    relu_net = nn.Network([nn.Dense(9, 6, rng=rng), nn.ReLU(), nn.Dense(6, 2, rng=rng)],
                          input_shapes=((1, 3, 3),))
    pool_net = nn.Network([nn.MaxPool2x2(), nn.Dense(8, 2, rng=rng)],
                          input_shapes=((2, 4, 4),))
    fc_net = nn.Network([nn.Dense(12, 2, rng=rng)], input_shapes=((3, 2, 2),))
    return [
        ("layer-conv", conv_net, _rand_input((2, 4, 4), seed + 2), None),
        ("layer-relu", relu_net, _rand_input((1, 3, 3), seed + 3), None),
        ("layer-maxpool", pool_net, _rand_input((2, 4, 4), seed + 4), None),
        ("layer-fc", fc_net, _rand_input((3, 2, 2), seed + 5), None),
    ]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundtex",
                                     description="Disparity-texture ground and road detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override config seeds")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--scene", choices=sorted(_SCENES), default="six-planes")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("texture", help="compute the disparity texture map")
    p.add_argument("--disparity", type=Path, required=True)
    p.add_argument("--format", choices=("kitti-png16", "pfm"), default="kitti-png16")
    p.add_argument("--block-size", type=int, choices=(1, 3), default=None)
    common(p)
    p.set_defaults(func=cmd_texture)

    p = sub.add_parser("slic", help="superpixel segmentation")
    p.add_argument("--image", type=Path, required=True)
    common(p)
    p.set_defaults(func=cmd_slic)

    p = sub.add_parser("train", help="train the ground or road net")
    p.add_argument("--task", choices=("ground", "road"), required=True)
    p.add_argument("--manifest", type=Path, required=True,
                   help="lines: <rgb> <disparity> <mask>")
    p.add_argument("--block-size", type=int, choices=(1, 3), default=None)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a trained net on one frame")
    p.add_argument("--task", choices=("ground", "road"), required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--disparity", type=Path, required=True)
    p.add_argument("--format", choices=("kitti-png16", "pfm"), default="kitti-png16")
    p.add_argument("--block-size", type=int, choices=(1, 3), default=None)
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="compare prediction masks against ground truth")
    p.add_argument("--list", type=Path, default=None,
                   help="file of lines: <scene> <method> <pred png> <gt png>")
    p.add_argument("--gt", type=Path, default=None)
    p.add_argument("--pred", action="append", default=[], metavar="NAME=PATH")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--arch", choices=("all", "layers", "ground", "fusion"), default="all")
    common(p, out=False)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (imaging.DisparityFormatError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # computation failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
