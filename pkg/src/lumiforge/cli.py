"""Command line front end.

One binary, eight subcommands, reproducible by construction: every run
writes a JSON snapshot of its effective configuration next to its outputs
before any heavy compute starts, all RNG flows from the --seed flag, and
CSV/PNG artifacts are byte-stable for a fixed seed. Logging is key=value
lines on stderr so stdout stays clean for piping.

Exit codes: 0 success, 1 usage error (bad flag, missing value), 2 runtime
failure (bad file, diverged training, geometry error).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .epi import EPI, extract_epi, shear
from .errors import LumiforgeError
from .lightfield import load_light_field, read_image, save_light_field, write_image
from .metrics import (
    disparity_sweep,
    evaluate_light_fields,
    write_sweep_csv,
    write_view_csv,
)
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.network import NetworkSpec, build_model, infer_epi
from .nn.train import TrainConfig, train
from .optics import CameraConfig, epi_sketch, sweep_counts
from .pipeline import SRPlan, super_resolve
from .scenes import GenConfig, TrainingPair, gen_training_pairs


class _UsageError(Exception):
    """Semantic usage problem found after argparse (missing config value)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1 with
    # the offending flag named in the message.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log(**kv):
    print(" ".join(f"{k}={v}" for k, v in kv.items()), file=sys.stderr)


def _load_toml(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _write_run_config(args: argparse.Namespace, anchor: Path):
    """Snapshot the effective configuration next to the output artifact.

    anchor is the output file or directory; directories get run_config.json
    inside, files get <name>.run.json beside them.
    """
    payload = {
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "threads": args.threads,
        "precision": getattr(args, "precision", "float32"),
        "argv": {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(vars(args).items())
            if k not in ("func", "command") and not k.startswith("_")
        },
    }
    if anchor.suffix:
        anchor.parent.mkdir(parents=True, exist_ok=True)
        target = anchor.parent / (anchor.name + ".run.json")
    else:
        anchor.mkdir(parents=True, exist_ok=True)
        target = anchor / "run_config.json"
    with open(target, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(run_config=target)


# ------------------------------------------------------------------ optics

_CAMERA_KEYS = ("focal_length", "mla_distance", "n_micro", "n_views", "micro_pitch", "aperture")


def _camera_from(args: argparse.Namespace) -> CameraConfig:
    cfg = _load_toml(args.config)
    values = dict(cfg.get("camera", cfg))
    for key in _CAMERA_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    missing = [k for k in _CAMERA_KEYS[:-1] if k not in values]
    if missing:
        raise _UsageError(
            "missing camera parameters: " + ", ".join(missing) + " (set via --config or flags)"
        )
    return CameraConfig(
        focal_length=float(values["focal_length"]),
        mla_distance=float(values["mla_distance"]),
        n_micro=int(values["n_micro"]),
        n_views=int(values["n_views"]),
        micro_pitch=float(values["micro_pitch"]),
        aperture=float(values["aperture"]) if values.get("aperture") is not None else None,
    )


def _cmd_optics_sweep(args: argparse.Namespace) -> int:
    camera = _camera_from(args)
    out = Path(args.out)
    _write_run_config(args, out)
    disparities = np.linspace(args.d_min, args.d_max, args.steps)
    rows = sweep_counts(camera, disparities)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["disparity", "effective_count"])
        for d, count in rows:
            w.writerow([f"{d:.6f}", count])
    _log(wrote=out, rows=len(rows))
    if args.sketch_dir is not None:
        sketch_dir = Path(args.sketch_dir)
        sketch_dir.mkdir(parents=True, exist_ok=True)
        for i, d in enumerate(disparities):
            sk = epi_sketch(camera, float(d))
            img = np.repeat(sk.raster[:, :, None].astype(np.float64), 3, axis=2)
            write_image(sketch_dir / f"sketch_{i:03d}.png", img)
        _log(sketches=len(disparities), dir=sketch_dir)
    return 0


# --------------------------------------------------------------------- gen

def _epi_to_png(epi: EPI, path: Path):
    write_image(path, epi.data)


def _epi_from_png(path: Path, mask_path: Path | None = None) -> EPI:
    data = read_image(path)
    mask = None
    if mask_path is not None:
        mask = read_image(mask_path)[:, :, 0] > 0.5
    return EPI(data=data, mask=mask)


def write_pair(pair: TrainingPair, out_dir: Path, index: int):
    stem = f"pair_{index:05d}"
    _epi_to_png(pair.lr, out_dir / f"{stem}_lr.png")
    _epi_to_png(pair.hr, out_dir / f"{stem}_hr.png")
    sidecar = {
        "index": index,
        "disparities": [float(d) for d in pair.disparities],
        "lr_shape": [pair.lr.n_views, pair.lr.n_pixels],
        "hr_shape": [pair.hr.n_views, pair.hr.n_pixels],
        "lr_mask": None,
        "hr_mask": None,
    }
    if pair.lr.mask is not None and not pair.lr.mask.all():
        name = f"{stem}_lr_mask.png"
        write_image(out_dir / name, np.repeat(pair.lr.mask[:, :, None].astype(np.float64), 3, axis=2))
        sidecar["lr_mask"] = name
    if pair.hr.mask is not None and not pair.hr.mask.all():
        name = f"{stem}_hr_mask.png"
        write_image(out_dir / name, np.repeat(pair.hr.mask[:, :, None].astype(np.float64), 3, axis=2))
        sidecar["hr_mask"] = name
    with open(out_dir / f"{stem}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def read_pair(out_dir: Path, index: int) -> TrainingPair:
    stem = f"pair_{index:05d}"
    with open(out_dir / f"{stem}.json") as fh:
        sidecar = json.load(fh)
    lr_mask = out_dir / sidecar["lr_mask"] if sidecar["lr_mask"] else None
    hr_mask = out_dir / sidecar["hr_mask"] if sidecar["hr_mask"] else None
    return TrainingPair(
        lr=_epi_from_png(out_dir / f"{stem}_lr.png", lr_mask),
        hr=_epi_from_png(out_dir / f"{stem}_hr.png", hr_mask),
        disparities=tuple(sidecar["disparities"]),
    )


def read_pair_set(data_dir: Path) -> list[TrainingPair]:
    sidecars = sorted(data_dir.glob("pair_*.json"))
    if not sidecars:
        raise LumiforgeError(f"no pair_*.json sidecars under {data_dir}")
    return [read_pair(data_dir, int(p.stem.split("_")[1])) for p in sidecars]


def _cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_run_config(args, out)
    config = GenConfig(
        n_views=args.n_views,
        n_pixels=args.n_pixels,
        d_min=args.d_min,
        d_max=args.d_max,
    )
    pairs = gen_training_pairs(args.seed, args.count, config)
    for i, pair in enumerate(pairs):
        write_pair(pair, out, i)
    _log(wrote_pairs=len(pairs), dir=out)
    return 0


# --------------------------------------------------------------------- epi

def _cmd_epi_extract(args: argparse.Namespace) -> int:
    lf = load_light_field(args.inp)
    epi = extract_epi(lf, args.orientation, args.view, args.row)
    out = Path(args.out)
    _write_run_config(args, out)
    _epi_to_png(epi, out)
    _log(wrote=out, views=epi.n_views, pixels=epi.n_pixels)
    return 0


def _cmd_epi_shear(args: argparse.Namespace) -> int:
    epi = _epi_from_png(Path(args.inp))
    out = Path(args.out)
    _write_run_config(args, out)
    sheared = shear(epi, args.d)
    _epi_to_png(sheared, out)
    if args.mask_out is not None:
        mask = sheared.valid_mask()
        write_image(Path(args.mask_out), np.repeat(mask[:, :, None].astype(np.float64), 3, axis=2))
    _log(wrote=out, d=args.d)
    return 0


# ------------------------------------------------------------------- train

_SPEC_PRESETS = {
    "full": NetworkSpec.full,
    "reduced": NetworkSpec.reduced,
    "micro": NetworkSpec.micro,
}


def _cmd_train(args: argparse.Namespace) -> int:
    ckpt_out = Path(args.ckpt_out)
    _write_run_config(args, ckpt_out)
    file_cfg = _load_toml(args.config).get("train", {})

    def pick(flag, key, default):
        return flag if flag is not None else file_cfg.get(key, default)

    spec = _SPEC_PRESETS[args.spec]()
    if args.no_lstm:
        spec = spec.without_lstm()
    pairs = read_pair_set(Path(args.data))
    model = build_model(spec, seed=args.seed)
    cfg = TrainConfig(
        steps=args.steps,
        batch_size=int(pick(args.batch_size, "batch_size", 16)),
        lr=float(pick(args.lr, "lr", 1e-4)),
        seed=args.seed,
        augment=not args.no_augment,
        log_every=args.log_every,
        divergence_dump=ckpt_out.parent / (ckpt_out.stem + ".diverged.ckpt"),
    )
    _log(spec=args.spec, lstm=not args.no_lstm, pairs=len(pairs), steps=cfg.steps, lr=cfg.lr)
    log = train(model, pairs, cfg)
    save_checkpoint(ckpt_out, model)
    _log(wrote=ckpt_out, final_loss=f"{log.final_loss:.6e}")
    if args.log_csv is not None:
        log.to_csv(Path(args.log_csv))
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    model, _ = load_checkpoint(Path(args.ckpt), dtype=np.dtype(args.precision))
    epi = _epi_from_png(Path(args.epi_in))
    out = Path(args.epi_out)
    _write_run_config(args, out)
    result = infer_epi(model, epi)
    _epi_to_png(result, out)
    _log(wrote=out, views=result.n_views, pixels=result.n_pixels)
    return 0


# ------------------------------------------------------------------ sr/eval

_PLAN_NAMES = {"h-first": "h-first", "v-first": "v-first", "avg": "average-both"}


def _cmd_sr(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_run_config(args, out)
    model, _ = load_checkpoint(Path(args.ckpt), dtype=np.dtype(args.precision))
    lf = load_light_field(args.inp)
    plan = SRPlan(
        order=_PLAN_NAMES[args.plan],
        tile_size=args.tile_size,
        tile_overlap=args.tile_overlap,
        batch_size=args.batch_size,
        pin_input_views=args.pin_input_views,
    )
    _log(plan=plan.order, input_shape=lf.views.shape)
    result = super_resolve(lf, model, plan)
    manifest = save_light_field(result, out)
    _log(wrote=manifest, output_shape=result.views.shape)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_run_config(args, out)
    ref = load_light_field(args.ref)
    test = load_light_field(args.test)
    report = evaluate_light_fields(ref, test, d_max=args.d_max)
    write_view_csv(report, out)
    _log(
        wrote=out,
        mean_psnr=f"{report.mean_psnr:.4f}",
        mean_ssim="" if report.mean_ssim is None else f"{report.mean_ssim:.4f}",
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_run_config(args, out)
    if args.d_list is not None:
        disparities = [float(tok) for tok in args.d_list.split(",") if tok.strip()]
    else:
        disparities = [float(d) for d in np.linspace(args.d_min, args.d_max, args.steps)]
    model = None
    if args.ckpt is not None:
        model, _ = load_checkpoint(Path(args.ckpt), dtype=np.dtype(args.precision))
    base = GenConfig(n_views=args.n_views, n_pixels=args.n_pixels)
    rows = disparity_sweep(model, disparities, args.trials, args.seed, base)
    write_sweep_csv(rows, out)
    _log(wrote=out, rows=len(rows), baseline=model is None)
    return 0


# ---------------------------------------------------------------- dispatch

def build_parser() -> _Parser:
    parser = _Parser(prog="lumiforge", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (results are identical for any value)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_optics = sub.add_parser("optics", help="plenoptic sampling analysis")
    optics_sub = p_optics.add_subparsers(dest="optics_command", required=True)
    p_os = optics_sub.add_parser("sweep", help="effective sample count vs disparity")
    p_os.add_argument("--d-min", type=float, required=True)
    p_os.add_argument("--d-max", type=float, required=True)
    p_os.add_argument("--steps", type=int, required=True)
    p_os.add_argument("--config", help="TOML with a [camera] table")
    p_os.add_argument("--out", default="optics_sweep.csv")
    p_os.add_argument("--sketch-dir", help="also render one EPI line sketch PNG per disparity")
    p_os.add_argument("--focal-length", dest="focal_length", type=float)
    p_os.add_argument("--mla-distance", dest="mla_distance", type=float)
    p_os.add_argument("--n-micro", dest="n_micro", type=int)
    p_os.add_argument("--n-views", dest="n_views", type=int)
    p_os.add_argument("--micro-pitch", dest="micro_pitch", type=float)
    p_os.add_argument("--aperture", dest="aperture", type=float)
    p_os.set_defaults(func=_cmd_optics_sweep)

    p_gen = sub.add_parser("gen", help="generate synthetic LR/HR EPI training pairs")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n-views", type=int, default=5)
    p_gen.add_argument("--n-pixels", type=int, default=64)
    p_gen.add_argument("--d-min", type=float, default=-8.0)
    p_gen.add_argument("--d-max", type=float, default=8.0)
    p_gen.set_defaults(func=_cmd_gen)

    p_epi = sub.add_parser("epi", help="ad-hoc EPI manipulation")
    epi_sub = p_epi.add_subparsers(dest="epi_command", required=True)
    p_ex = epi_sub.add_parser("extract", help="slice one EPI out of a light field")
    p_ex.add_argument("--in", dest="inp", required=True, help="light field manifest file")
    p_ex.add_argument("--orientation", choices=("horizontal", "vertical"), required=True)
    p_ex.add_argument("--view", type=int, required=True, help="fixed view index (v for horizontal, u for vertical)")
    p_ex.add_argument("--row", type=int, required=True, help="fixed spatial row (y for horizontal, x for vertical)")
    p_ex.add_argument("--out", required=True)
    p_ex.set_defaults(func=_cmd_epi_extract)
    p_sh = epi_sub.add_parser("shear", help="shear an EPI by a disparity")
    p_sh.add_argument("--in", dest="inp", required=True)
    p_sh.add_argument("--d", type=float, required=True)
    p_sh.add_argument("--out", required=True)
    p_sh.add_argument("--mask-out", help="write the validity mask as a PNG")
    p_sh.set_defaults(func=_cmd_epi_shear)

    p_tr = sub.add_parser("train", help="train the EPI super-resolution network")
    p_tr.add_argument("--data", required=True, help="directory produced by `lumiforge gen`")
    p_tr.add_argument("--steps", type=int, required=True)
    p_tr.add_argument("--seed", type=int, required=True)
    p_tr.add_argument("--ckpt-out", required=True)
    p_tr.add_argument("--spec", choices=sorted(_SPEC_PRESETS), default="full")
    p_tr.add_argument("--no-lstm", action="store_true", help="ablation: plain convs instead of the LSTM block")
    p_tr.add_argument("--batch-size", type=int)
    p_tr.add_argument("--lr", type=float)
    p_tr.add_argument("--no-augment", action="store_true")
    p_tr.add_argument("--log-every", type=int, default=100)
    p_tr.add_argument("--log-csv", help="write the loss curve CSV here")
    p_tr.add_argument("--config", help="TOML with a [train] table; flags win")
    p_tr.set_defaults(func=_cmd_train)

    p_in = sub.add_parser("infer", help="super-resolve a single EPI")
    p_in.add_argument("--ckpt", required=True)
    p_in.add_argument("--epi-in", dest="epi_in", required=True)
    p_in.add_argument("--epi-out", dest="epi_out", required=True)
    p_in.add_argument("--precision", choices=("float32", "float64"), default="float32")
    p_in.set_defaults(func=_cmd_infer)

    p_sr = sub.add_parser("sr", help="super-resolve a full 4D light field")
    p_sr.add_argument("--in", dest="inp", required=True, help="light field manifest file")
    p_sr.add_argument("--ckpt", required=True)
    p_sr.add_argument("--plan", choices=sorted(_PLAN_NAMES), default="h-first")
    p_sr.add_argument("--out", required=True)
    p_sr.add_argument("--pin-input-views", action="store_true")
    p_sr.add_argument("--tile-size", type=int)
    p_sr.add_argument("--tile-overlap", type=int, default=16)
    p_sr.add_argument("--batch-size", type=int, default=8)
    p_sr.add_argument("--precision", choices=("float32", "float64"), default="float32")
    p_sr.set_defaults(func=_cmd_sr)

    p_ev = sub.add_parser("eval", help="per-view PSNR/SSIM between two light fields")
    p_ev.add_argument("--ref", required=True)
    p_ev.add_argument("--test", required=True)
    p_ev.add_argument("--out", required=True)
    p_ev.add_argument("--d-max", type=float, default=0.0, help="boundary margin disparity")
    p_ev.set_defaults(func=_cmd_eval)

    p_sw = sub.add_parser("sweep", help="PSNR vs disparity on single-layer scenes")
    p_sw.add_argument("--ckpt", help="checkpoint; omit for the bicubic baseline")
    p_sw.add_argument("--d-list", help="comma-separated disparities (overrides --d-min/--d-max/--steps)")
    p_sw.add_argument("--d-min", type=float, default=-4.0)
    p_sw.add_argument("--d-max", type=float, default=4.0)
    p_sw.add_argument("--steps", type=int, default=17)
    p_sw.add_argument("--trials", type=int, default=20)
    p_sw.add_argument("--seed", type=int, default=0)
    p_sw.add_argument("--n-views", type=int, default=5)
    p_sw.add_argument("--n-pixels", type=int, default=64)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--precision", choices=("float32", "float64"), default="float32")
    p_sw.set_defaults(func=_cmd_sweep)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"lumiforge {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except LumiforgeError as exc:
        _log(error=type(exc).__name__, detail=str(exc))
        return 2
    except (OSError, IndexError, ValueError) as exc:
        # bad paths, out-of-range slice indices, degenerate image sizes
        _log(error=type(exc).__name__, detail=str(exc))
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
