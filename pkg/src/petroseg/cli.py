"""Command-line front end.

Every command is deterministic given (inputs, config, seed) and exits
nonzero on error with a single machine-parseable line on stderr:
``E-CONFIG: ...`` (exit 2), ``E-INPUT: ...`` (exit 3) or
``E-INTERNAL: ...`` (exit 4).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import c457, colorseg, raster, scoring
from .config import ToolConfig, config_text, load_config
from .errors import ToolkitError
from .phantom import generate_phantom


def _out_path(value, default: Path) -> Path:
    path = Path(value) if value else default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_config_init(args, config: ToolConfig) -> int:
    text = config_text(config)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ingest(args, config: ToolConfig) -> int:
    pitch = args.pitch if args.pitch is not None else config.pitch_um
    scan = raster.load_scan(args.scan, pitch)
    wmm, hmm = scan.extent_mm
    print(f"scan {scan.id}: {scan.width}x{scan.height} px, pitch {scan.pitch_um} um/px, extent {wmm:.2f}x{hmm:.2f} mm")
    if args.out:
        from PIL import Image

        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(scan.pixels)).save(out, format="PNG")
        print(f"wrote {out}")
    return 0


def cmd_color_seg(args, config: ToolConfig) -> int:
    pitch = args.pitch if args.pitch is not None else config.pitch_um
    scan = raster.load_scan(args.scan, pitch)
    mask = colorseg.segment_by_color(scan, config.color_rules())
    mask = colorseg.filter_small_components(mask, config.area_filters())
    out = _out_path(args.out, Path(config.out_dir) / f"{scan.id}.mask.png")
    raster.save_mask(mask, out, mode="indexed")
    palette = out.with_name(out.stem + ".palette.png")
    raster.save_mask(mask, palette, mode="palette")
    fractions = raster.phase_fractions(mask)
    shares = ", ".join(f"{p.name.lower()} {100 * fractions[p]:.2f}%" for p in raster.PHASES)
    print(f"segmented {scan.id}: {shares}")
    print(f"wrote {out} and {palette}")
    return 0


def _load_pairs(dataset_dir: Path, pitch: float):
    from .errors import InputError

    scans = sorted(p for p in dataset_dir.glob("*.png") if ".mask" not in p.name)
    if not scans:
        raise InputError(f"no scan/mask pairs in {dataset_dir} (expected X.png with X.mask.png)")
    pairs = []
    for scan_path in scans:
        mask_path = scan_path.with_name(scan_path.stem + ".mask.png")
        if not mask_path.exists():
            raise InputError(f"missing mask for {scan_path.name}: expected {mask_path.name}")
        scan = raster.load_scan(scan_path, pitch)
        mask = raster.load_mask(mask_path, pitch)
        if (scan.height, scan.width) != (mask.height, mask.width):
            raise InputError(
                f"pair {scan_path.stem!r}: scan {scan.width}x{scan.height} vs mask {mask.width}x{mask.height}"
            )
        pairs.append((scan, mask))
    return pairs


def cmd_train(args, config: ToolConfig) -> int:
    from . import net

    pairs = _load_pairs(Path(args.dataset), config.pitch_um)
    train_config = config.train_config()
    model, trace = net.train(pairs, train_config)
    out_dir = Path(args.out if args.out else config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "model.ckpt"
    net.save_checkpoint(model, checkpoint)
    (out_dir / "loss.csv").write_text(trace.loss_csv(), encoding="utf-8")
    (out_dir / "miou.csv").write_text(trace.miou_csv(), encoding="utf-8")
    print(
        f"trained {train_config.iterations} iterations on {len(pairs)} pairs: "
        f"final loss {trace.loss[-1]:.4f}, training mIoU {trace.final_miou:.4f}"
    )
    print(f"wrote {checkpoint}, {out_dir / 'loss.csv'}, {out_dir / 'miou.csv'}")
    return 0


def cmd_predict(args, config: ToolConfig) -> int:
    from . import net

    pitch = args.pitch if args.pitch is not None else config.pitch_um
    model = net.load_checkpoint(args.checkpoint)
    scan = raster.load_scan(args.scan, pitch)
    started = time.perf_counter()
    mask = net.predict_tiled(model, scan, tile=config.predict_tile, overlap=config.predict_overlap, threads=config.train_threads)
    elapsed = time.perf_counter() - started
    out = _out_path(args.out, Path(config.out_dir) / f"{scan.id}.pred.png")
    raster.save_mask(mask, out, mode="indexed")
    if args.palette:
        raster.save_mask(mask, out.with_name(out.stem + ".palette.png"), mode="palette")
    print(f"segmented {scan.id} ({scan.width}x{scan.height} px) in {elapsed:.2f} s")
    print(f"wrote {out}")
    return 0


def cmd_c457(args, config: ToolConfig) -> int:
    pitch = args.pitch if args.pitch is not None else config.pitch_um
    mask = raster.load_mask(args.mask, pitch)
    grid = c457.make_grid(mask.width, mask.height, config.grid_rows, config.grid_cols)
    counts = c457.point_count(mask, grid)
    traverse = c457.make_traverse(mask.width, mask.height, pitch, config.traverse_spacing_um)
    chords = c457.extract_chords(mask, traverse, include_border=config.traverse_include_border)
    report = c457.air_void_parameters(counts, chords, traverse.total_length_mm)
    label = args.label if args.label else Path(args.mask).stem
    rows = [(label, report)]
    sys.stdout.write(c457.render_report_table(rows))
    if args.out:
        Path(args.out).write_text(c457.report_table_csv(rows), encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args, config: ToolConfig) -> int:
    pitch = args.pitch if args.pitch is not None else config.pitch_um
    truth = scoring.load_annotation(args.annotation)
    mask = raster.load_mask(args.mask, pitch)
    report = scoring.accuracy_report(truth, mask)
    sys.stdout.write(scoring.render_accuracy_report(report))
    if args.json:
        payload = {
            "scan_id": truth.scan_id,
            "matrix": report.matrix.counts.tolist(),
            "iou": {"agg": report.iou_agg, "paste": report.iou_paste, "void": report.iou_void},
            "miou": report.miou,
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {args.json}")
    return 0


def cmd_report(args, config: ToolConfig) -> int:
    rows = []
    for path in args.reports:
        rows.extend(c457.parse_report_csv(Path(path).read_text(encoding="utf-8")))
    sys.stdout.write(c457.render_report_table(rows))
    if args.out:
        Path(args.out).write_text(c457.report_table_csv(rows), encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_phantom(args, config: ToolConfig) -> int:
    phantom = generate_phantom(
        width=args.width,
        height=args.height,
        pitch_um=args.pitch if args.pitch is not None else config.pitch_um,
        void_fraction=args.void_fraction,
        paste_fraction=args.paste_fraction,
        seed=args.seed,
        plant_probes=not args.no_probes,
        scan_id=args.id,
    )
    out_dir = Path(args.out if args.out else config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    scan_path = out_dir / f"{phantom.scan.id}.png"
    Image.fromarray(phantom.scan.pixels).save(scan_path, format="PNG")
    mask_path = out_dir / f"{phantom.scan.id}.mask.png"
    raster.save_mask(phantom.mask, mask_path, mode="indexed")
    raster.save_mask(phantom.mask, out_dir / f"{phantom.scan.id}.mask.palette.png", mode="palette")
    fractions = raster.phase_fractions(phantom.mask)
    if phantom.probes:
        probes_path = out_dir / f"{phantom.scan.id}.probes.json"
        probes_path.write_text(
            json.dumps(
                {
                    "void_px": [list(p) for p in phantom.probes.void_px],
                    "speck_rect": [phantom.probes.speck_rect.x, phantom.probes.speck_rect.y,
                                   phantom.probes.speck_rect.w, phantom.probes.speck_rect.h],
                    "speck_px_count": phantom.probes.speck_px_count,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    shares = ", ".join(f"{p.name.lower()} {100 * fractions[p]:.3f}%" for p in raster.PHASES)
    print(f"phantom {phantom.scan.id}: {args.width}x{args.height} px, {shares}")
    print(f"wrote {scan_path} and {mask_path}")
    return 0


def cmd_serve(args, config: ToolConfig) -> int:
    from .service import AnnotationService

    pitch = args.pitch if args.pitch is not None else config.pitch_um
    scan = raster.load_scan(args.scan, pitch)
    port = args.port if args.port is not None else config.service_port
    service = AnnotationService(
        scan,
        args.annotation,
        grid_rows=config.grid_rows,
        grid_cols=config.grid_cols,
        port=port,
        static_dir=args.static,
    )
    print(f"LISTENING {service.port}", flush=True)
    print(f"annotating {scan.id} ({service.grid.rows}x{service.grid.cols} grid) -> {args.annotation}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        service.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="petroseg", description="Concrete phase segmentation and air-void analysis")
    parser.add_argument("--config", help="path to a key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    p_init = config_sub.add_parser("init", help="emit a config file with all defaults")
    p_init.add_argument("--out", help="file to write (default: stdout)")
    p_init.set_defaults(func=cmd_config_init)

    p = sub.add_parser("ingest", help="validate a scan file and report its geometry")
    p.add_argument("scan")
    p.add_argument("--pitch", type=float, help="um per pixel (overrides config)")
    p.add_argument("--out", help="write a normalized RGB PNG copy")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("color-seg", help="segment a color-treated scan by HSV rules")
    p.add_argument("scan")
    p.add_argument("--pitch", type=float)
    p.add_argument("--out", help="output mask path (.png)")
    p.set_defaults(func=cmd_color_seg)

    p = sub.add_parser("train", help="train the convolutional segmenter")
    p.add_argument("dataset", help="directory of X.png scans with X.mask.png labels")
    p.add_argument("--out", help="output directory (checkpoint + traces)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="segment a scan with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("scan")
    p.add_argument("--pitch", type=float)
    p.add_argument("--out", help="output mask path (.png)")
    p.add_argument("--palette", action="store_true", help="also write a palette render")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("c457", help="air-void parameters from a phase mask")
    p.add_argument("mask")
    p.add_argument("--pitch", type=float)
    p.add_argument("--label", help="row label for the report (default: mask stem)")
    p.add_argument("--out", help="CSV export path")
    p.set_defaults(func=cmd_c457)

    p = sub.add_parser("evaluate", help="score a mask against a grid annotation")
    p.add_argument("annotation", help="tab-separated ground-truth annotation")
    p.add_argument("mask")
    p.add_argument("--pitch", type=float)
    p.add_argument("--json", help="write the matrix and IoUs as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge c457 CSV exports into one comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="merged CSV export path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("phantom", help="generate a synthetic scan with known phase geometry")
    p.add_argument("--out", help="output directory")
    p.add_argument("--width", type=int, default=2000)
    p.add_argument("--height", type=int, default=2000)
    p.add_argument("--pitch", type=float)
    p.add_argument("--void-fraction", type=float, default=0.10)
    p.add_argument("--paste-fraction", type=float, default=0.30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-probes", action="store_true", help="skip the planted area-filter probes")
    p.add_argument("--id", help="scan id (default: phantom_<seed>)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("scan")
    p.add_argument("annotation", help="annotation file (created if absent)")
    p.add_argument("--pitch", type=float)
    p.add_argument("--port", type=int, help="0 picks a free port")
    p.add_argument("--static", help="directory with the browser UI to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except ToolkitError as exc:
        print(f"{exc.prefix}: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        return 0
    except Exception as exc:  # invariant violation or bug
        print(f"E-INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
