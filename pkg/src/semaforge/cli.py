"""The ``semaforge`` command line: prepare-data, train, forge, detect,
evaluate, bench-robustness and serve.

Logs go to stderr; machine outputs go to files or stdout only. Exit codes:
0 success, 1 domain error, 2 usage error. A JSON project config
(--project-config) can preload any flag's value (flags still win); unknown
config keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, SemaforgeError

log = logging.getLogger("semaforge")

CONFIG_KEYS = {
    "prepare-data", "train", "forge", "detect", "evaluate",
    "bench-robustness", "serve",
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path!r} does not exist")
    cfg = json.loads(p.read_text())
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, values in cfg.items():
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
    return cfg


def _dump_json(payload: dict, path: Path | str) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def cmd_prepare_data(args) -> int:
    from .data import CurationRules, PairedSample, curate, fetch_tiles, save_dataset
    from .mapsclient import HttpTileClient, SyntheticTileClient
    from .synthetic import make_synthetic_pair

    rng = np.random.default_rng(args.seed)
    if args.synthetic:
        samples = []
        for i in range(args.synthetic):
            smap, image = make_synthetic_pair(args.size, args.seed + i)
            samples.append(PairedSample(map=smap, image=image, source_id=f"synthetic/{i}"))
    else:
        cities = [tuple(c) for c in json.loads(args.cities)]
        client = (SyntheticTileClient(size=args.size) if args.client == "synthetic"
                  else HttpTileClient(size=args.size))
        samples = fetch_tiles(client, cities, perturbations=args.perturbations,
                              radius=args.radius, seed=args.seed)
    rules = CurationRules(near_duplicate_threshold=args.near_dup_threshold)
    kept, report = curate(samples, rules)
    if not kept:
        raise SemaforgeError("curation rejected every sample")

    n_val = int(np.floor(args.val_fraction * len(kept) + 0.5))
    order = rng.permutation(len(kept))
    split_of = {kept[i].source_id: ("val" if pos < n_val else "train")
                for pos, i in enumerate(order)}
    manifest = save_dataset(args.out, kept, split_of, report)
    log.info("wrote %d samples (%d rejected) to %s", len(kept), len(report.rejected), args.out)
    print(str(manifest))
    return 0


def cmd_train(args) -> int:
    from .data import load_dataset
    from .gan.model import build_translator, save_checkpoint
    from .training import TrainConfig, finetune, train_staged

    data = load_dataset(args.data, split="train")
    if not data:
        raise SemaforgeError(f"no training samples under {args.data!r}")
    palette = data[0].map.palette
    model = build_translator(args.arch, palette, profile=args.profile, seed=args.seed)
    base = dict(epochs=args.epochs, batch_size=args.batch_size,
                learning_rate=args.lr, seed=args.seed,
                memorization_target=args.target, out_dir=None)
    if args.staged:
        if args.arch != "pix2pixhd":
            raise ConfigError("--staged applies to pix2pixhd only")
        stage_epochs = max(1, args.epochs // 3)
        cfgs = [TrainConfig(**{**base, "epochs": stage_epochs, "stage": s})
                for s in ("global-only", "local-only", "joint")]
        report = train_staged(model, data, cfgs)
    else:
        report = finetune(model, data, TrainConfig(**base))
    ckpt = save_checkpoint(model, args.out)
    payload = report.to_json()
    if args.deterministic:
        payload["wall_clock"] = 0.0
    payload["checkpoint"] = Path(args.out).name  # run-location independent
    _dump_json(payload, Path(args.out) / "train_report.json")
    log.info("final train SSIM %.3f after %d epochs", report.final_ssim, len(report.history))
    print(str(ckpt))
    return 0


def cmd_forge(args) -> int:
    from .data import PairedSample
    from .gan.model import load_checkpoint
    from .manipulation import forge
    from .raster import ImageTile, SemanticMap

    model = load_checkpoint(args.ckpt)
    original = SemanticMap.load_png(args.map, model.palette)
    tampered = SemanticMap.load_png(args.tampered, model.palette)
    pristine = ImageTile.load_png(args.image)
    if (original.indices == tampered.indices).all():
        log.warning("tampered map equals the original; output will be the pristine image")
    sample = PairedSample(map=original, image=pristine, source_id=Path(args.image).stem)
    record = forge(model, sample, tampered, dilation=args.dilation,
                   feather=args.feather, deterministic=args.deterministic,
                   checkpoint_id=Path(args.ckpt).name, blend_method=args.blend_method)
    out = record.save(args.out)
    print(str(out))
    return 0


def cmd_detect(args) -> int:
    from .forensics import heatmap
    from .forensics.detector import load_detector
    from .raster import ImageTile

    model = load_detector(args.ckpt)
    image = ImageTile.load_png(args.image)
    hm = heatmap(model, image, stride=args.stride)
    out_png = Path(args.out)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    ImageTile(hm.to_png_array().astype(np.float32) / 255.0).save_png(out_png)
    np.save(out_png.with_suffix(".npy"), hm.scores.astype(np.float32))
    print(str(out_png))
    return 0


def cmd_evaluate(args) -> int:
    from .manipulation import ManipulationMask
    from .metrics import PatchProtocol, evaluate_many, get_embedder
    from .raster import ImageTile

    pristine_dir, generated_dir = Path(args.pristine), Path(args.generated)
    mask_dir = Path(args.masks) if args.masks else None
    names = sorted(p.name for p in pristine_dir.glob("*.png"))[: args.n_examples]
    if not names:
        raise SemaforgeError(f"no PNG pairs under {args.pristine!r}")
    pairs = []
    for name in names:
        gen_path = generated_dir / name
        if not gen_path.is_file():
            raise SemaforgeError(f"missing generated counterpart for {name}")
        pristine = ImageTile.load_png(pristine_dir / name)
        generated = ImageTile.load_png(gen_path)
        if mask_dir and (mask_dir / name).is_file():
            mask = ManipulationMask.from_image(ImageTile.load_png(mask_dir / name))
        else:
            mask = ManipulationMask(np.zeros(pristine.shape, dtype=bool))
        pairs.append((pristine, generated, mask))
    protocol = PatchProtocol(patch=args.patch, stride=args.stride,
                             min_clean_fraction=args.min_clean_fraction)
    report = evaluate_many(pairs, protocol, get_embedder(args.embedder, seed=args.seed))
    _dump_json(report.to_json(), args.out)
    log.info("evaluated %d patches: fid=%.3f kid=%.5f ssim=%.3f",
             report.n_patches, report.fid, report.kid, report.ssim)
    print(str(args.out))
    return 0


def cmd_bench_robustness(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .data import build_patch_dataset
    from .forensics import DetectorTrainConfig, robustness_sweep, train_detector
    from .forensics.detector import save_detector
    from .raster import ImageTile
    from .synthetic import make_separable_detector_task

    cfg = json.loads(Path(args.config).read_text())
    known = {"out_dir", "seed", "modes", "grids", "n_images", "image_size",
             "epochs", "epsilon", "attack_steps", "pristine_dir", "generated_dir"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown bench config keys: {sorted(unknown)}")
    out_dir = Path(cfg.get("out_dir", "bench"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    modes = cfg.get("modes", ["plain", "bart"])
    grids = cfg.get("grids", {"gaussian-blur": [0.1, 1.0, 3.0, 5.0]})

    if "pristine_dir" in cfg:
        pristine = [ImageTile.load_png(p) for p in sorted(Path(cfg["pristine_dir"]).glob("*.png"))]
        generated = [ImageTile.load_png(p) for p in sorted(Path(cfg["generated_dir"]).glob("*.png"))]
    else:
        pristine, generated = make_separable_detector_task(
            int(cfg.get("n_images", 8)), int(cfg.get("image_size", 128)), seed)

    data = build_patch_dataset(pristine, generated, patch=64, val_fraction=0.25, seed=seed)
    rows = []
    curves_by_mode = {}
    for mode in modes:
        tc = DetectorTrainConfig(epochs=int(cfg.get("epochs", 2)), seed=seed,
                                 epsilon=float(cfg.get("epsilon", 1.0)),
                                 attack_steps=int(cfg.get("attack_steps", 5)))
        model, report = train_detector(data, mode=mode, cfg=tc)
        save_detector(model, out_dir / f"detector_{mode}")
        val_pristine = [t for i, t in enumerate(pristine) if data.is_val[data.source_index == i].any()]
        val_generated = [t for i, t in enumerate(generated)
                         if data.is_val[data.source_index == len(pristine) + i].any()]
        curves = robustness_sweep(model, val_generated or generated,
                                  val_pristine or pristine, grids, noise_seed=seed)
        curves_by_mode[mode] = curves
        for curve in curves:
            for param, value in zip(curve.params, curve.values):
                rows.append((mode, curve.kind, param, value))
        log.info("mode=%s clean val AUC %.3f", mode, report.val_auc)

    csv_path = out_dir / "robustness.csv"
    with csv_path.open("w") as fh:
        fh.write("mode,transform,param,auc\n")
        for mode, kind, param, value in rows:
            fh.write(f"{mode},{kind},{param:.6g},{value:.6f}\n")

    for kind in grids:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for mode, curves in curves_by_mode.items():
            curve = next(c for c in curves if c.kind == kind)
            ax.plot(curve.params, curve.values, marker="o", label=mode)
        ax.set_xlabel(f"{kind} parameter")
        ax.set_ylabel("AUC")
        ax.set_ylim(0.0, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / f"robustness_{kind}.png", dpi=120)
        plt.close(fig)
    print(str(csv_path))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(checkpoint_root=args.checkpoints, data_root=args.data,
          ui_dir=args.ui, port=args.port, host=args.host)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="semaforge", description=__doc__)
    parser.add_argument("--project-config",
                        help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("prepare-data", help="ingest/curate pairs and write the dataset layout")
    p.add_argument("--out", required=True)
    p.add_argument("--synthetic", type=int, default=0, help="generate N synthetic pairs")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--client", choices=["synthetic", "http"], default="synthetic")
    p.add_argument("--cities", default="[]", help="JSON list of [lat, lon]")
    p.add_argument("--perturbations", type=int, default=10)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--near-dup-threshold", type=float, default=0.02)
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="fine-tune a translator to memorize the dataset")
    p.add_argument("--arch", choices=["cyclegan", "pix2pixhd"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=["toy", "full"], default="toy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--target", type=float, default=0.6)
    p.add_argument("--staged", action="store_true")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forge", help="generate from a tampered map and blend")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--tampered", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dilation", type=int, default=4)
    p.add_argument("--feather", type=int, default=3)
    p.add_argument("--blend-method", choices=["feather", "seamless"], default="feather")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("detect", help="stride-N localization heatmap")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="patch-wise FID/KID/SSIM protocol")
    p.add_argument("--pristine", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--masks", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--stride", type=int, default=32)
    p.add_argument("--min-clean-fraction", type=float, default=1.0)
    p.add_argument("--n-examples", type=int, default=20)
    p.add_argument("--embedder", choices=["test", "inception"], default="test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-robustness", help="sweep post-processing robustness curves")
    p.add_argument("--config", required=True, dest="config")
    p.set_defaults(func=cmd_bench_robustness)

    p = sub.add_parser("serve", help="run the local HTTP service")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--ui", default=None)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    subparsers.update(sub.choices)
    return parser, subparsers


def _apply_config(subparsers: dict[str, argparse.ArgumentParser], argv: list[str]) -> None:
    # Pull --project-config out early so its values can become subparser
    # defaults (bench-robustness has its own, unrelated --config flag).
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--project-config")
    known, _ = pre.parse_known_args(argv)
    cfg = _load_config(known.project_config)
    for name, values in cfg.items():
        mapped = {k.replace("-", "_"): v for k, v in values.items()}
        subparsers[name].set_defaults(**mapped)
        for action in subparsers[name]._actions:
            if action.dest in mapped:
                action.required = False


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        _apply_config(subparsers, argv)
        args = parser.parse_args(argv)
    except SemaforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SemaforgeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
