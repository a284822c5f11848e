"""Command-line drivers and stream utilities.

One subcommand per experiment (phase-scan, angle-scan, image, qkd) plus
``tags`` utilities over the TBL1 wire format and ``config`` for the
structured configuration document.  Every run writes its outputs plus a
manifest (experiment name, seed, config digest, output list, flags)
into the chosen directory; given the same config and seed the outputs
are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 insufficient-data flag
raised, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .analysis import save_mask_csv, save_mask_pgm, save_pattern_csv
from .config import (
    ConfigError,
    ExperimentConfig,
    config_sha256,
    dump_config,
    load_config,
    save_config,
)
from .tagstream import (
    StreamOrderError,
    check_stream_invariants,
    post_select,
    read_tags,
    stream_stats,
    sync_histogram,
    write_tags,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSUFFICIENT = 3
EXIT_INVARIANT = 4


def _write_manifest(out_dir: Path, experiment: str, seed: int, cfg: ExperimentConfig,
                    outputs: list[str], flags: dict) -> None:
    manifest = {
        "experiment": experiment,
        "seed": seed,
        "config_sha256": config_sha256(cfg),
        "outputs": sorted(outputs),
        "flags": flags,
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _cmd_config(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        save_config(args.out, cfg)
        print(f"wrote {args.out}")
    else:
        json.dump(dump_config(cfg), sys.stdout, indent=2, sort_keys=True)
        print()
    return EXIT_OK


def _cmd_phase_scan(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    run = experiments.run_phase_scan(cfg, args.seed, vary=args.vary)
    check_stream_invariants(run.stream, cfg.sensor.dead_time_ps)

    write_tags(out / "tags.tbl", run.stream)
    scan_rows = []
    for (row, col), scan in sorted(run.scans.items()):
        for x, c, e in zip(scan.x, scan.counts, scan.exposures):
            scan_rows.append([row, col, f"{x:.9g}", int(c), f"{e:.9g}"])
    _write_csv(out / "scans.csv", ["row", "col", "phase_rad", "count", "exposure_s"], scan_rows)
    fit_rows = []
    for (row, col), fit in sorted(run.fits.items()):
        fit_rows.append(
            [row, col, f"{fit.v:.6f}", f"{fit.phase0_rad:.6f}", f"{fit.amplitude:.6g}",
             f"{fit.offset:.6g}", f"{fit.residual_rms:.6g}", int(fit.clamped)]
        )
    _write_csv(
        out / "fits.csv",
        ["row", "col", "v", "phase0_rad", "amplitude_cps", "offset_cps", "residual_rms", "clamped"],
        fit_rows,
    )
    np.savetxt(out / "visibility_map.csv", run.v_map, fmt="%.6f", delimiter=",")
    hist = run.histogram
    _write_csv(
        out / "histogram.csv",
        ["bin_center_ps", "count"],
        [[f"{c:.1f}", int(n)] for c, n in zip(hist.bin_centers(), hist.counts)],
    )
    flags = {"fit_errors": {f"{r},{c}": msg for (r, c), msg in sorted(run.fit_errors.items())}}
    outputs = ["tags.tbl", "scans.csv", "fits.csv", "visibility_map.csv", "histogram.csv"]
    _write_manifest(out, "phase-scan", args.seed, cfg, outputs, flags)
    print(f"phase-scan: {len(run.fits)} pixels fitted, stream of {len(run.stream)} tags -> {out}")
    if not run.fits:
        return EXIT_INSUFFICIENT
    return EXIT_OK


def _cmd_angle_scan(args) -> int:
    cfg = load_config(args.config)
    phis = [float(p) for p in args.phi.split(",") if p != ""]
    if not phis:
        raise ConfigError("empty phi list")
    out = _out_dir(args)
    run = experiments.run_angle_scan(cfg, phis, args.seed)
    rows = []
    for r in run.rows:
        rows.append(
            [
                f"{r.rotation_phi_deg:.3f}",
                f"{r.mean_intensity_cps:.6g}",
                r.total_counts,
                f"{r.fit.v:.6f}" if r.fit else "",
                f"{r.fit.phase0_rad:.6f}" if r.fit else "",
                int(r.insufficient),
                r.fit_error or "",
            ]
        )
    _write_csv(
        out / "summary.csv",
        ["phi_deg", "mean_intensity_cps", "total_counts", "v", "phase0_rad", "insufficient", "fit_error"],
        rows,
    )
    flags = {"insufficient_angles": [r.rotation_phi_deg for r in run.rows if r.insufficient]}
    _write_manifest(out, "angle-scan", args.seed, cfg, ["summary.csv"], flags)
    print(f"angle-scan: {len(run.rows)} angles -> {out}")
    return EXIT_INSUFFICIENT if run.any_insufficient else EXIT_OK


def _load_mask(path: str, shape: tuple[int, int]) -> np.ndarray:
    mask = np.loadtxt(path, delimiter=",", dtype=float)
    if mask.shape != shape:
        raise ConfigError(f"object mask {path} has shape {mask.shape}, expected {shape}")
    return mask


def _cmd_image(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    mask = _load_mask(args.object_mask, (cfg.sensor.rows, cfg.sensor.cols))
    run = experiments.run_imaging(cfg, mask, args.snr_profile, args.seed)
    check_stream_invariants(run.stream, cfg.sensor.dead_time_ps)

    np.savetxt(out / "intensity.csv", run.intensity, fmt="%d", delimiter=",")
    save_pattern_csv(out / "patterns.csv", run.patterns)
    _write_csv(
        out / "reference.csv",
        ["sample", "value"],
        [[k, f"{v:.9g}"] for k, v in enumerate(run.reference.values)],
    )
    _write_csv(
        out / "scores.csv",
        ["row", "col", "score", "above_threshold"],
        [
            [r, c, f"{run.scores[(r, c)]:.6g}", int(run.reconstructed[r - 1, c - 1])]
            for (r, c) in sorted(run.scores)
        ],
    )
    save_mask_csv(out / "reconstructed.csv", run.reconstructed)
    save_mask_pgm(out / "reconstructed.pgm", run.reconstructed)
    flags = {
        "snr_profile": args.snr_profile,
        "threshold": run.threshold,
        "excluded": [list(p) for p in run.excluded],
    }
    outputs = [
        "intensity.csv", "patterns.csv", "reference.csv", "scores.csv",
        "reconstructed.csv", "reconstructed.pgm",
    ]
    _write_manifest(out, "image", args.seed, cfg, outputs, flags)
    print(
        f"image[{args.snr_profile}]: {int(run.reconstructed.sum())} pixels above "
        f"threshold {run.threshold:.3g} -> {out}"
    )
    return EXIT_OK


def _cmd_qkd(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    session, result, report = experiments.run_qkd(cfg, args.pulses, args.seed)
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(
        out, "qkd", args.seed, cfg, ["report.json"],
        {"insecure": report["insecure"], "insufficient": result.sifted_count < cfg.qkd.min_sifted},
    )
    qber = f"{report['qber']:.4f}" if report["qber"] is not None else "n/a"
    print(f"qkd: {result.sifted_count} sifted bits, QBER {qber} -> {out}")
    if result.sifted_count < cfg.qkd.min_sifted:
        return EXIT_INSUFFICIENT
    return EXIT_OK


def _parse_window(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def _cmd_tags(args) -> int:
    if args.tags_cmd == "inspect":
        stats = stream_stats(args.file)
        writer = csv.writer(sys.stdout)
        writer.writerow(["channel", "count"])
        for ch, n in sorted(stats.per_channel.items()):
            writer.writerow([ch, n])
        print(
            f"# tags={stats.n_tags} out_of_order={stats.n_out_of_order} "
            f"span_ps={(stats.last_timestamp_ps - stats.first_timestamp_ps) if stats.n_tags else 0} "
            f"throughput={stats.tags_per_second:.3g} tags/s",
            file=sys.stderr,
        )
        return EXIT_OK
    if args.tags_cmd == "hist":
        hist = sync_histogram(
            args.file, args.channel, args.bin_width, _parse_window(args.window), args.trigger
        )
        writer = csv.writer(sys.stdout)
        writer.writerow(["bin_center_ps", "count"])
        for c, n in zip(hist.bin_centers(), hist.counts):
            writer.writerow([f"{c:.1f}", int(n)])
        print(
            f"# pre_trigger={hist.n_pre_trigger} out_of_window={hist.n_out_of_window} "
            f"channel_tags={hist.n_channel_tags}",
            file=sys.stderr,
        )
        return EXIT_OK
    if args.tags_cmd == "select":
        stream = read_tags(args.file)
        n = post_select(stream, args.channel, args.center, args.half_width, args.trigger)
        writer = csv.writer(sys.stdout)
        writer.writerow(["channel", "center_ps", "half_width_ps", "count"])
        writer.writerow([args.channel, args.center, args.half_width, n])
        return EXIT_OK
    raise ConfigError(f"unknown tags subcommand {args.tags_cmd!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbsim",
        description="Time-bin single-photon imaging simulator and analysis drivers",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("config", help="validate and dump the configuration document")
    p.add_argument("--config", default=None, help="config JSON (defaults when omitted)")
    p.add_argument("--out", default=None, help="write to file instead of stdout")
    p.set_defaults(func=_cmd_config)

    p = sub.add_parser("phase-scan", help="full-period fringe scan with per-pixel fits")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--vary", choices=("analyzer", "converter"), default="analyzer")
    p.set_defaults(func=_cmd_phase_scan)

    p = sub.add_parser("angle-scan", help="visibility and intensity versus surface rotation")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--phi", required=True, help="comma-separated rotation angles in degrees")
    p.set_defaults(func=_cmd_angle_scan)

    p = sub.add_parser("image", help="correlation-contrast imaging of an object mask")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--object-mask", required=True, help="8x8 CSV of {0,1}")
    p.add_argument("--snr-profile", choices=("high", "low", "lamp"), default="high")
    p.set_defaults(func=_cmd_image)

    p = sub.add_parser("qkd", help="BB84 session over the scattering channel")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pulses", type=int, default=1_000_000)
    p.set_defaults(func=_cmd_qkd)

    p = sub.add_parser("tags", help="TBL1 stream utilities")
    tags_sub = p.add_subparsers(dest="tags_cmd", required=True)
    t = tags_sub.add_parser("inspect", help="per-channel counts and throughput")
    t.add_argument("file")
    t = tags_sub.add_parser("hist", help="trigger-synchronized histogram as CSV")
    t.add_argument("file")
    t.add_argument("--channel", type=int, required=True)
    t.add_argument("--bin-width", type=int, default=25)
    t.add_argument("--window", default="1000:3700", help="LO:HI in ps relative to trigger")
    t.add_argument("--trigger", type=int, default=0)
    t = tags_sub.add_parser("select", help="count tags in a trigger-relative window")
    t.add_argument("file")
    t.add_argument("--channel", type=int, required=True)
    t.add_argument("--center", type=int, required=True)
    t.add_argument("--half-width", type=int, required=True)
    t.add_argument("--trigger", type=int, default=0)
    p.set_defaults(func=_cmd_tags)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamOrderError,) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        if "dead-time violation" in str(exc):
            print(f"invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
