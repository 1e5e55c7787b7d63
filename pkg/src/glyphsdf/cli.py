"""Command-line pipeline: prepare, train, render, interpolate, fit, eval.

Exit codes: 0 ok, 1 usage/config error, 2 numerical failure, 3 I/O error.
``--threads 1`` pins the BLAS pools before numpy loads, which is the
bit-reproducible mode used by the determinism tests.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

CONFIG_ENV = "GLYPHSDF_CONFIG"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="glyphsdf", description=__doc__)
    parser.add_argument("--config", help=f"run config JSON (default: ${CONFIG_ENV})")
    parser.add_argument("--seed", type=int, help="override train.seed")
    parser.add_argument("--threads", type=int, help="BLAS threads; 1 = reproducible")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config value (JSON-parsed); flags win over the file",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", help="rasterize, detect corners, build templates")

    p_train = sub.add_parser("train", help="fit the network to the prepared dataset")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument(
        "--mode", choices=["n1", "pixel"], help="n1: single-channel baseline; "
        "pixel: supervise opacities directly (no distance field)"
    )

    p_render = sub.add_parser("render", help="render a trained glyph")
    p_render.add_argument("--checkpoint", required=True)
    p_render.add_argument("--family", required=True)
    p_render.add_argument("--label", required=True)
    p_render.add_argument("--res", default="256", help="comma-separated widths")
    p_render.add_argument("--method", choices=["implicit", "bilateral"], default="implicit")
    p_render.add_argument("--channels", action="store_true", help="dump per-channel images")
    p_render.add_argument("--contours", action="store_true", help="dump zero-level contours")

    p_interp = sub.add_parser("interpolate", help="latent interpolation frames")
    p_interp.add_argument("--checkpoint", required=True)
    p_interp.add_argument("--family-a", required=True)
    p_interp.add_argument("--family-b", required=True)
    p_interp.add_argument("--label", required=True)
    p_interp.add_argument("--steps", type=int, required=True)
    p_interp.add_argument("--res", type=int, default=256)

    p_fit = sub.add_parser("fit", help="fit a latent to a target raster")
    p_fit.add_argument("--checkpoint", required=True)
    p_fit.add_argument("--target", required=True, help="PGM raster to match")
    p_fit.add_argument("--label", required=True)
    p_fit.add_argument("--mask", help="PGM mask; pixels >= 50% gray are ignored")
    p_fit.add_argument("--res", type=int, default=128, help="completion render width")

    p_eval = sub.add_parser("eval", help="metrics table over the dataset")
    p_eval.add_argument("--checkpoint", required=True)
    return parser


def _load_config(args):
    from .config import RunConfig
    from .errors import ConfigError

    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = RunConfig.load(path) if path else RunConfig()
    cfg.apply_overrides(args.set)
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.threads is not None:
        cfg.train.threads = args.threads
    if getattr(args, "mode", None) == "n1":
        cfg.field.channels = 1
    elif getattr(args, "mode", None) == "pixel":
        cfg.train.supervision = "pixel"
    return cfg


def _out_dir(cfg):
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe_name(family, label_char):
    keep = "".join(c if c.isalnum() or c in "-_" else "_" for c in family)
    return f"{keep}__{label_char}"


def _glyph_hash(text, cfg):
    payload = json.dumps(
        [
            text,
            cfg.field.train_width,
            cfg.field.aa_k,
            cfg.field.corner_threshold,
            cfg.dataset.margin,
        ],
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _prepare_dataset(cfg, report=None):
    """Idempotent dataset preparation; returns the prepared glyph list."""
    import numpy as np

    from . import field as field_mod
    from . import templates as templates_mod
    from .errors import GlyphSdfError
    from .glyphs import glyph_from_path, load_manifest
    from .training import PreparedGlyph

    if not cfg.dataset.manifest:
        raise _UsageError("config has no dataset.manifest")
    entries = load_manifest(cfg.dataset.manifest, cfg.dataset.alphabet)
    prep_dir = _out_dir(cfg) / "prepared"
    prep_dir.mkdir(parents=True, exist_ok=True)
    prepared = []
    rebuilt = skipped = 0
    for entry in entries:
        text = entry.path.read_text(encoding="utf-8")
        digest = _glyph_hash(text, cfg)
        stem = prep_dir / _safe_name(entry.family_id, entry.label_char)
        meta_path = stem.with_suffix(".json")
        cached = None
        if meta_path.is_file():
            try:
                cached = json.loads(meta_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                cached = None
        try:
            glyph = glyph_from_path(
                text, label=entry.label, family_id=entry.family_id,
                margin=cfg.dataset.margin,
            )
        except GlyphSdfError as exc:
            raise GlyphSdfError(
                f"glyph {entry.family_id}/{entry.label_char} ({entry.path}): {exc}"
            ) from exc
        if cached is not None and cached.get("hash") == digest:
            sdf = field_mod.read_grid(stem.with_suffix(".sdf.grid"))[0].astype(np.float64)
            templates = templates_mod.templates_from_arrays(
                field_mod.read_grid(stem.with_suffix(".templates.grid")),
                cached["corners"],
                cfg.field.train_width,
            )
            skipped += 1
        else:
            from . import geometry, render as render_mod

            sdf = geometry.sdf_grid(glyph, cfg.field.train_width)
            # training always sees the stored float32 precision, so runs are
            # identical whether the prepared cache was hit or rebuilt
            sdf = sdf.astype(np.float32).astype(np.float64)
            templates = templates_mod.build_templates(
                glyph, cfg.field.train_width, cfg.field.corner_threshold
            )
            grids, corner_meta = templates_mod.templates_to_arrays(templates)
            field_mod.write_grid(stem.with_suffix(".sdf.grid"), sdf)
            field_mod.write_grid(stem.with_suffix(".templates.grid"), grids)
            render_mod.write_image(
                stem.with_suffix(".pgm"),
                field_mod.kernel(sdf, cfg.field.gamma_final),
            )
            meta = {
                "hash": digest,
                "family": entry.family_id,
                "label": entry.label_char,
                "train_width": cfg.field.train_width,
                "corners": corner_meta,
                "sampling": {
                    "rho": cfg.train.rho,
                    "min_homogeneous": cfg.train.min_homogeneous,
                    "seed": cfg.train.seed,
                },
            }
            meta_path.write_text(
                json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            rebuilt += 1
        prepared.append(
            PreparedGlyph(
                entry.family_id, entry.family_index, entry.label, glyph, sdf, templates
            )
        )
    if report:
        report(f"prepared {len(entries)} glyphs: {rebuilt} rebuilt, {skipped} skipped")
    return prepared


def _write_log_csv(path, rows):
    cols = [
        "epoch", "gamma", "loss_total", "loss_global", "loss_local",
        "loss_grad", "latent_norm", "wall_ms",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")


def _family_latent(bundle, family):
    if family not in bundle.latents.family_ids:
        raise _UsageError(
            f"unknown family {family!r}; checkpoint has {bundle.latents.family_ids}"
        )
    return bundle.latents.codes[bundle.latents.family_ids.index(family)]


def _label_index(bundle, label_char):
    if label_char not in bundle.alphabet:
        raise _UsageError(f"label {label_char!r} not in checkpoint alphabet")
    return bundle.alphabet.index(label_char)


def cmd_prepare(cfg, args):
    _prepare_dataset(cfg, report=lambda msg: print(msg))
    cfg.echo(_out_dir(cfg) / "config.echo.json")
    return 0


def cmd_train(cfg, args):
    from . import autodecoder as ad
    from .training import TrainingDiverged, train

    out = _out_dir(cfg)
    dataset = _prepare_dataset(cfg, report=lambda msg: print(msg, file=sys.stderr))
    resume = None
    if args.resume:
        resume = ad.load_checkpoint(args.resume, expect_alphabet=cfg.dataset.alphabet)
    every = max(1, cfg.train.epochs // 20)

    def progress(epoch, row):
        if (epoch + 1) % every == 0 or epoch == 0:
            print(
                f"epoch {epoch + 1}/{cfg.train.epochs} gamma={row['gamma']:.4g} "
                f"loss={row['loss_total']:.6g}",
                file=sys.stderr,
            )

    cfg.echo(out / "config.echo.json")
    try:
        bundle, rows = train(
            dataset,
            cfg.dataset.alphabet,
            cfg.field,
            cfg.train,
            resume=resume,
            progress=progress,
        )
    except TrainingDiverged as exc:
        if exc.bundle is not None:
            ad.save_checkpoint(out / "checkpoint.diverged.ckpt", exc.bundle)
            print(
                f"training diverged at epoch {exc.epoch}; last good checkpoint "
                f"written to {out / 'checkpoint.diverged.ckpt'}",
                file=sys.stderr,
            )
        else:
            print(f"training diverged at epoch {exc.epoch}", file=sys.stderr)
        return 2
    bundle.train_config = cfg.to_dict()
    ad.save_checkpoint(out / "checkpoint.ckpt", bundle)
    _write_log_csv(out / "train_log.csv", rows)
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    return 0


def _parse_res_list(text):
    try:
        values = [int(v) for v in str(text).split(",") if v]
    except ValueError:
        raise _UsageError(f"bad --res list {text!r}") from None
    if not values:
        raise _UsageError("--res needs at least one width")
    return values


def cmd_render(cfg, args):
    import numpy as np

    from . import autodecoder as ad
    from . import field as field_mod
    from .render import (
        extract_zero_level, field_grid, render_bilateral, render_implicit,
        write_contours, write_image,
    )
    from .field import compose_median, kernel

    bundle = ad.load_checkpoint(args.checkpoint)
    z = _family_latent(bundle, args.family)
    label = _label_index(bundle, args.label)
    out = _out_dir(cfg)
    train_grid = None
    if args.method == "bilateral" or args.channels:
        train_grid = field_grid(bundle, z, label, bundle.train_width)
    for width in _parse_res_list(args.res):
        name = f"render_{_safe_name(args.family, args.label)}_{args.method}_{width}"
        if args.method == "implicit":
            img = render_implicit(bundle, z, label, width)
        else:
            img = render_bilateral(
                train_grid, width, bundle.aa_k, bundle.supervision
            )
        write_image(out / f"{name}.pgm", img)
        if args.channels:
            grid = field_grid(bundle, z, label, width)
            gamma = bundle.aa_k / width
            for c in range(grid.shape[0]):
                ch = kernel(grid[c], gamma) if bundle.supervision == "sdf" else np.clip(grid[c], 0, 1)
                write_image(out / f"{name}_c{c}.pgm", ch)
        if args.contours:
            grid = field_grid(bundle, z, label, width)
            med = compose_median(grid, axis=0)
            if bundle.supervision != "sdf":
                med = med - 0.5  # pixel mode: threshold opacities at 1/2
            write_contours(out / f"{name}_contours.json", extract_zero_level(med))
    if args.channels and train_grid is not None:
        field_mod.write_grid(
            out / f"channels_{_safe_name(args.family, args.label)}.grid", train_grid
        )
    print(f"rendered {len(_parse_res_list(args.res))} image(s) into {out}")
    return 0


def cmd_interpolate(cfg, args):
    from . import autodecoder as ad
    from .render import render_implicit, write_image

    if args.steps < 2:
        raise _UsageError("--steps must be >= 2 (endpoints included)")
    bundle = ad.load_checkpoint(args.checkpoint)
    za = _family_latent(bundle, args.family_a)
    zb = _family_latent(bundle, args.family_b)
    label = _label_index(bundle, args.label)
    out = _out_dir(cfg)
    for i in range(args.steps):
        t = i / (args.steps - 1)
        z = (1.0 - t) * za + t * zb
        img = render_implicit(bundle, z, label, args.res)
        write_image(
            out / f"interp_{_safe_name(args.family_a, args.label)}"
                  f"_{_safe_name(args.family_b, args.label)}_{i:03d}.pgm",
            img,
        )
    print(f"wrote {args.steps} frames into {out}")
    return 0


def cmd_fit(cfg, args):
    import numpy as np

    from . import autodecoder as ad
    from .render import read_image, render_implicit, write_image
    from .training import fit_latent

    bundle = ad.load_checkpoint(args.checkpoint)
    label = _label_index(bundle, args.label)
    target = read_image(args.target)
    mask = None
    if args.mask:
        mask_img = read_image(args.mask)
        if mask_img.shape != target.shape:
            raise _UsageError(
                f"mask dimensions {mask_img.shape} do not match target {target.shape}"
            )
        mask = mask_img >= 0.5
    z, history = fit_latent(
        bundle,
        target,
        label,
        mask=mask,
        lr=cfg.train.fit_lr,
        steps=cfg.train.fit_steps,
        gamma_reg=cfg.train.gamma_reg,
        seed=cfg.train.seed,
    )
    out = _out_dir(cfg)
    (out / "fit_z.json").write_text(
        json.dumps({"z": z.tolist(), "final_objective": history[-1] if history else None}),
        encoding="utf-8",
    )
    for idx, char in enumerate(bundle.alphabet):
        img = render_implicit(bundle, z, idx, args.res)
        write_image(out / f"completed_{idx:02d}_{char}.pgm", img)
    print(f"fitted latent + {len(bundle.alphabet)} completions written to {out}")
    return 0


def cmd_eval(cfg, args):
    import numpy as np

    from . import autodecoder as ad
    from .field import compose_median, kernel
    from . import geometry
    from .metrics import corner_region_metrics, laplacian_smoothness, mse, soft_iou
    from .render import field_grid, render_bilateral, render_implicit

    bundle = ad.load_checkpoint(args.checkpoint)
    dataset = _prepare_dataset(cfg, report=lambda msg: print(msg, file=sys.stderr))
    out = _out_dir(cfg)
    rows = []
    for prepared in dataset:
        if prepared.family_id not in bundle.latents.family_ids:
            continue
        z = bundle.latents.codes[bundle.latents.family_ids.index(prepared.family_id)]
        grid = field_grid(bundle, z, prepared.label, bundle.train_width)
        lap = laplacian_smoothness(compose_median(grid, axis=0))
        sdf_cache = {}
        for width in cfg.eval.resolutions:
            sdf_cache[width] = geometry.sdf_grid(prepared.glyph, width)
        for method in cfg.eval.methods:
            for width in cfg.eval.resolutions:
                truth = kernel(sdf_cache[width], bundle.aa_k / width)
                if method == "implicit":
                    img = render_implicit(bundle, z, prepared.label, width)
                else:
                    img = render_bilateral(grid, width, bundle.aa_k, bundle.supervision)
                corner = corner_region_metrics(img, truth, prepared.templates, width)
                rows.append(
                    {
                        "method": method,
                        "res": width,
                        "mse": mse(img, truth),
                        "siou": soft_iou(img, truth),
                        "c_mse": corner.mse,
                        "c_siou": corner.siou,
                        "lap": lap,
                        "family": prepared.family_id,
                        "label": prepared.glyph.label,
                    }
                )
    cols = ["method", "res", "mse", "siou", "c_mse", "c_siou", "lap", "family", "label"]
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in cols) + "\n")
    print(f"metrics for {len(rows)} rows written to {out / 'metrics.csv'}")
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "render": cmd_render,
    "interpolate": cmd_interpolate,
    "fit": cmd_fit,
    "eval": cmd_eval,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.threads is not None and args.threads > 0:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import (
        CheckpointError, ConfigError, GlyphSdfError, ManifestError,
        NumericalError, PathSyntaxError,
    )

    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ManifestError, PathSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except GlyphSdfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
