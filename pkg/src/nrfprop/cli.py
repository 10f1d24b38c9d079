"""Command-line driver: ``nrfprop run|eval|loss|overlay``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imaging
from .features import save_descriptors
from .metrics import VideoEval, frame_eval, report, temporal_stability_variant
from .objective import ComplementaryWeights, total_objective
from .propagation import PropagationConfig, process_video

log = logging.getLogger("nrfprop")

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InputError(Exception):
    pass


def list_stems(directory) -> dict:
    """Map file stem to path for every image in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"missing directory: {directory}")
    out = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in IMAGE_EXTS and path.is_file():
            if path.stem in out:
                raise InputError(f"duplicate stem {path.stem!r} in {directory}")
            out[path.stem] = path
    return out


def _require(stems, other, label):
    for stem in stems:
        if stem not in other:
            raise InputError(f"{label} has no file for stem {stem!r}")


def _lambda(value: str) -> float:
    out = float(value)
    if out < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0 or inf")
    return out


def _load_mask(path) -> np.ndarray:
    return imaging.load_scalar_map(path, luminance=True) >= 0.5


def cmd_run(args) -> int:
    root = Path(args.input)
    frames = list_stems(root / "frames")
    if not frames:
        raise InputError(f"no frames in {root / 'frames'}")
    fg = list_stems(root / "fg")
    bg = list_stems(root / "bg")
    _require(frames, fg, "fg/")
    _require(frames, bg, "bg/")

    config = PropagationConfig(
        lambda_c=args.lambda_c,
        k0=args.k0,
        dk=args.dk,
        threshold_ratio=args.threshold,
        closing_radius=args.closing_radius,
        superpixels=args.superpixels,
        compactness=args.compactness,
        slic_iters=args.slic_iters,
        spaces=args.spaces,
        flow_mode=args.flow_mode,
    )
    stems = list(frames)
    lum = args.luminance
    t0 = time.perf_counter()
    frame_data = [imaging.load_frame(frames[s]) for s in stems]
    fg_data = [imaging.load_scalar_map(fg[s], luminance=lum) for s in stems]
    bg_data = [imaging.load_scalar_map(bg[s], luminance=lum) for s in stems]
    load_time = time.perf_counter() - t0

    result = process_video(frame_data, fg_data, bg_data, config,
                           workers=args.workers, keep_flows=args.debug_dir is not None)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for stem, mask in zip(stems, result.masks):
        imaging.save_mask(mask, out / f"{stem}.png")
    if args.debug_dir is not None:
        _write_debug(Path(args.debug_dir), stems, result)

    manifest = {
        "config": config.to_dict(),
        "input": str(root),
        "workers": args.workers,
        "frames": [
            {
                "stem": stem,
                "superpixels": state.grid.count,
                "keyframes": [stems[v] for v in fr.keyframes],
                "timing": timing,
            }
            for stem, state, fr, timing in zip(stems, result.states, result.frames, result.timings)
        ],
        "timing": {"load": load_time, "total": time.perf_counter() - t0},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log.info("wrote %d masks to %s", len(stems), out)
    return EXIT_OK


def _write_debug(debug, stems, result) -> None:
    for sub in ("labels", "descriptors", "flows", "scores", "importance"):
        (debug / sub).mkdir(parents=True, exist_ok=True)
    for u, (stem, state, fr) in enumerate(zip(stems, result.states, result.frames)):
        imaging.save_label_map(state.grid.labels, debug / "labels" / f"{stem}.png")
        save_descriptors(state.features, debug / "descriptors" / f"{stem}.csv")
        imaging.save_scalar_map(fr.importance, debug / "importance" / f"{stem}.png")
        np.savetxt(
            debug / "scores" / f"{stem}.txt",
            np.column_stack([state.fg, state.bg, fr.fg, fr.bg]),
            fmt="%.8f",
            header="init_fg init_bg refined_fg refined_bg",
        )
        for v, flow in fr.flows.items():
            flow.dump(debug / "flows" / f"{stem}_{stems[v]}.txt")


def cmd_eval(args) -> int:
    masks = list_stems(args.masks)
    gts = list_stems(args.gt)
    if not gts:
        raise InputError(f"no ground-truth maps in {args.gt}")
    common = [s for s in gts if s in masks]
    if not common:
        raise InputError("masks and ground truth share no stems")
    missing = [s for s in gts if s not in masks]
    if missing:
        log.warning("%d ground-truth stems have no mask, e.g. %s", len(missing), missing[0])

    if args.groups:
        with open(args.groups) as fh:
            groups = json.load(fh)
        _require(common, groups, "grouping manifest")
    else:
        groups = {s: Path(args.gt).resolve().name for s in common}

    by_video = {}
    for stem in common:
        by_video.setdefault(str(groups[stem]), []).append(stem)

    videos = []
    for vid, stems in by_video.items():
        preds = [_load_mask(masks[s]) for s in stems]
        evals = [frame_eval(p, _load_mask(gts[s])) for s, p in zip(stems, preds)]
        stability = temporal_stability_variant(preds) if len(preds) > 1 else None
        videos.append(VideoEval.from_frames(vid, evals, stability))

    text = json.dumps(report(videos), sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_loss(args) -> int:
    lum = args.luminance
    fg = imaging.load_scalar_map(args.fg, luminance=lum)
    bg = imaging.load_scalar_map(args.bg, luminance=lum)
    gt = imaging.load_scalar_map(args.gt, luminance=lum)
    if not (fg.shape == bg.shape == gt.shape):
        raise InputError(f"map sizes differ: {fg.shape}, {bg.shape}, {gt.shape}")
    weights = ComplementaryWeights(args.lambda_cap, args.lambda_cup, args.sigma_cap, args.sigma_cup)
    result = total_objective(fg, bg, gt, weights)
    if args.debug_dir is not None:
        debug = Path(args.debug_dir)
        debug.mkdir(parents=True, exist_ok=True)
        np.save(debug / "grad_F.npy", result.grad_F)
        np.save(debug / "grad_B.npy", result.grad_B)
    print(json.dumps(result.scalars(), sort_keys=True))
    return EXIT_OK


def contour(mask) -> np.ndarray:
    """Mask pixels with a 4-neighbor outside the mask (or outside the image)."""
    mask = np.asarray(mask, dtype=bool)
    inner = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1),
                                   border_value=0)
    return mask & ~inner


def cmd_overlay(args) -> int:
    frames = list_stems(args.frames)
    masks = list_stems(args.masks)
    _require(frames, masks, "masks")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for stem, path in frames.items():
        frame = imaging.load_frame(path)
        mask = _load_mask(masks[stem])
        if mask.shape != frame.shape[:2]:
            raise InputError(f"mask {stem!r} does not match its frame size")
        frame[contour(mask)] = (0.0, 1.0, 0.0)
        imaging.save_frame(frame, out / f"{stem}.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrfprop",
        description="Temporally consistent primary-object masks from per-frame maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    defaults = PropagationConfig()
    run = sub.add_parser("run", help="refine fg/bg maps of one video into masks")
    run.add_argument("input", help="directory holding frames/, fg/ and bg/")
    run.add_argument("output", help="directory receiving masks and manifest.json")
    run.add_argument("--k0", type=int, default=defaults.k0)
    run.add_argument("--lambda-c", type=_lambda, default=defaults.lambda_c,
                     help="temporal weight; 'inf' ignores each frame's own maps")
    run.add_argument("--dk", type=int, default=defaults.dk, help="keyframe interval")
    run.add_argument("--superpixels", type=int, default=defaults.superpixels)
    run.add_argument("--compactness", type=float, default=defaults.compactness)
    run.add_argument("--slic-iters", type=int, default=defaults.slic_iters)
    run.add_argument("--threshold", type=float, default=defaults.threshold_ratio,
                     help="binarization threshold as a fraction of the map maximum")
    run.add_argument("--closing-radius", type=int, default=defaults.closing_radius)
    run.add_argument("--spaces", default=",".join(defaults.spaces),
                     help="comma-separated subset of rgb,lab,hsv")
    run.add_argument("--flow-mode", choices=("reversible", "cosine"), default=defaults.flow_mode)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--debug-dir", default=None)
    run.add_argument("--luminance", action="store_true",
                     help="accept color map files by converting them to luma")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score masks against ground truth")
    ev.add_argument("masks")
    ev.add_argument("gt")
    ev.add_argument("--groups", help="JSON object mapping stems to video ids")
    ev.add_argument("--output", help="write the JSON report here instead of stdout")
    ev.set_defaults(func=cmd_eval)

    loss = sub.add_parser("loss", help="complementary loss of an (F, B, G) triple")
    loss.add_argument("fg")
    loss.add_argument("bg")
    loss.add_argument("gt")
    weights = ComplementaryWeights()
    loss.add_argument("--lambda-cap", type=float, default=weights.lambda_cap)
    loss.add_argument("--lambda-cup", type=float, default=weights.lambda_cup)
    loss.add_argument("--sigma-cap", type=float, default=weights.sigma_cap)
    loss.add_argument("--sigma-cup", type=float, default=weights.sigma_cup)
    loss.add_argument("--debug-dir", default=None, help="write gradients as .npy files")
    loss.add_argument("--luminance", action="store_true")
    loss.set_defaults(func=cmd_loss)

    ov = sub.add_parser("overlay", help="draw mask contours onto frames")
    ov.add_argument("frames")
    ov.add_argument("masks")
    ov.add_argument("output")
    ov.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("NRF_PROP_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
