"""Command-line front end.

Subcommands:
    restore    full pipeline, writes the requested stage images A..E
    simulate   generate a synthetic turbulent sequence with ground truth
    flow       pairwise optical flow between two images, writes a .flo file
    centroid   geometric stages only (centroid C and registered mean D)
    deblur     NL-TV deconvolution of a single image

Stage letters follow the output convention: (A) raw reference frame,
(B) temporal mean, (C) centroid, (D) registered mean, (E) NL-TV result.
Exit codes: 0 success, 1 validation/configuration error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import numpy as np

from . import kernels
from .centroid import iterate_centroid, register_and_average
from .config import SCHEMA, ConfigError, PipelineConfig, parse_value, resolve_config
from .flow import horn_schunck
from .grid import rmse, temporal_mean
from .io import read_image, read_sequence, write_flow, write_png
from .nltv import nltv_deconvolve
from .simulate import simulate_sequence, synthetic_scene, write_sequence


@dataclass
class RunReport:
    stages: dict = field(default_factory=dict)
    rmse: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    correction_norms: list = field(default_factory=list)
    nltv_energy: float | None = None
    output_dir: Path | None = None
    truth: np.ndarray | None = None


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Execute the requested stages and write images plus a report."""
    report = RunReport(output_dir=cfg.output_dir)

    if cfg.simulate:
        if cfg.sim_truth is not None:
            truth = read_image(cfg.sim_truth)
        else:
            truth = synthetic_scene(cfg.sim_size, cfg.sim_size, seed=cfg.sim.seed)
        frames, _ = simulate_sequence(truth, cfg.sim)
        report.truth = truth
    elif cfg.input_dir is not None:
        frames = read_sequence(cfg.input_dir)
    else:
        raise ConfigError("either input.dir or input.simulate=true is required")

    if cfg.centroid.reference_index >= len(frames):
        raise ConfigError(
            f"centroid.reference_index {cfg.centroid.reference_index} "
            f"out of range for {len(frames)} frames"
        )

    emit = set(cfg.emit_stages)
    need = set(emit)
    if "E" in need:
        need.add("D")
    if "D" in need:
        need.add("C")

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    diag_dir = cfg.output_dir / "diagnostics" if cfg.diagnostics else None
    if diag_dir is not None:
        diag_dir.mkdir(parents=True, exist_ok=True)

    def _record(stage, img, seconds):
        report.stages[stage] = img
        report.timings[stage] = seconds
        if stage in emit:
            write_png(cfg.output_dir / f"stage_{stage}.png", img)
            if report.truth is not None:
                report.rmse[stage] = rmse(img, report.truth)

    if "A" in need:
        t0 = time.perf_counter()
        raw = frames[cfg.centroid.reference_index].copy()
        _record("A", raw, time.perf_counter() - t0)
    if "B" in need:
        t0 = time.perf_counter()
        mean = temporal_mean(frames)
        _record("B", mean, time.perf_counter() - t0)
    if "C" in need:
        t0 = time.perf_counter()
        cen, norms = iterate_centroid(frames, cfg.centroid, dump_dir=diag_dir)
        report.correction_norms = norms
        _record("C", cen, time.perf_counter() - t0)
        if diag_dir is not None:
            lines = ["iteration,norm"]
            lines += [f"{i + 1},{n!r}" for i, n in enumerate(norms)]
            (diag_dir / "correction_norms.csv").write_text("\n".join(lines) + "\n")
    if "D" in need:
        t0 = time.perf_counter()
        _, reg_mean = register_and_average(
            frames, report.stages["C"], cfg.centroid, dump_dir=diag_dir
        )
        _record("D", reg_mean, time.perf_counter() - t0)
    if "E" in need:
        t0 = time.perf_counter()
        stream = StringIO()
        sharp = nltv_deconvolve(report.stages["D"], cfg.nltv, diag=stream)
        text = stream.getvalue()
        if diag_dir is not None:
            (diag_dir / "nltv_trace.csv").write_text(text)
        last = text.strip().splitlines()[-1]
        report.nltv_energy = float(last.split(",")[1])
        _record("E", sharp, time.perf_counter() - t0)

    _write_report(cfg, report, len(frames), frames[0].shape)
    return report


def _write_report(cfg: PipelineConfig, report: RunReport, n_frames: int, shape) -> None:
    lines = [
        f"backend={kernels.backend()}",
        f"threads={cfg.threads}",
        f"n_frames={n_frames}",
        f"width={shape[1]}",
        f"height={shape[0]}",
        f"reference_index={cfg.centroid.reference_index}",
        f"emit_stages={','.join(cfg.emit_stages)}",
    ]
    for stage in sorted(report.timings):
        lines.append(f"stage_{stage}_seconds={report.timings[stage]:.3f}")
    for stage in sorted(report.rmse):
        lines.append(f"rmse_{stage}={report.rmse[stage]!r}")
    for i, norm in enumerate(report.correction_norms):
        lines.append(f"correction_norm_{i + 1}={norm!r}")
    if report.nltv_energy is not None:
        lines.append(f"nltv_final_energy={report.nltv_energy!r}")
    (cfg.output_dir / "report.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; route them through
    # ConfigError so bad flags count as validation errors (exit 1)
    def error(self, message):
        raise ConfigError(message)


def _add_schema_flags(parser, prefixes=None):
    for key, (tag, default, help_text) in SCHEMA.items():
        if prefixes is not None and not any(key.startswith(p) for p in prefixes):
            continue
        parser.add_argument(
            f"--{key}",
            dest=_dest(key),
            metavar=tag.upper(),
            type=lambda raw, k=key: parse_value(k, raw),
            default=None,
            help=f"{help_text} (default: {default})",
        )


def _dest(key: str) -> str:
    return "opt_" + key.replace(".", "_")


def _overrides(args, prefixes=None) -> dict:
    out = {}
    for key in SCHEMA:
        if prefixes is not None and not any(key.startswith(p) for p in prefixes):
            continue
        val = getattr(args, _dest(key), None)
        if val is not None:
            out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deturb", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_restore = sub.add_parser("restore", help="run the full restoration pipeline")
    p_restore.add_argument("--config", type=Path, default=None, help="key=value config file")
    _add_schema_flags(p_restore)
    p_restore.set_defaults(func=_cmd_restore)

    p_centroid = sub.add_parser("centroid", help="geometric stages only (C and D)")
    p_centroid.add_argument("--config", type=Path, default=None, help="key=value config file")
    _add_schema_flags(p_centroid)
    p_centroid.set_defaults(func=_cmd_centroid)

    p_sim = sub.add_parser("simulate", help="write a synthetic turbulent sequence")
    p_sim.add_argument("--config", type=Path, default=None, help="key=value config file")
    p_sim.add_argument("--format", choices=("png", "pgm"), default="png")
    _add_schema_flags(p_sim, prefixes=("sim.", "output_dir"))
    p_sim.set_defaults(func=_cmd_simulate)

    p_flow = sub.add_parser("flow", help="pairwise optical flow to a .flo file")
    p_flow.add_argument("first", type=Path)
    p_flow.add_argument("second", type=Path)
    p_flow.add_argument("output", type=Path)
    p_flow.add_argument("--trace", type=Path, default=None, help="per-iteration CSV trace")
    _add_schema_flags(p_flow, prefixes=("hs.",))
    p_flow.set_defaults(func=_cmd_flow)

    p_deblur = sub.add_parser("deblur", help="NL-TV deconvolution of one image")
    p_deblur.add_argument("input", type=Path)
    p_deblur.add_argument("output", type=Path)
    p_deblur.add_argument("--trace", type=Path, default=None, help="energy trace CSV")
    _add_schema_flags(p_deblur, prefixes=("nltv.",))
    p_deblur.set_defaults(func=_cmd_deblur)

    return parser


def _cmd_restore(args) -> int:
    cfg = resolve_config(args.config, _overrides(args))
    run_pipeline(cfg)
    return 0


def _cmd_centroid(args) -> int:
    cfg = resolve_config(args.config, _overrides(args))
    cfg.emit_stages = ("C", "D")
    run_pipeline(cfg)
    return 0


def _cmd_simulate(args) -> int:
    cfg = resolve_config(args.config, _overrides(args, prefixes=("sim.", "output_dir")))
    if cfg.sim_truth is not None:
        truth = read_image(cfg.sim_truth)
    else:
        truth = synthetic_scene(cfg.sim_size, cfg.sim_size, seed=cfg.sim.seed)
    frames, flows = simulate_sequence(truth, cfg.sim)
    # frames live in their own subdirectory so `restore --input.dir` does
    # not ingest the ground-truth image as a frame
    write_sequence(cfg.output_dir / "frames", frames, flows, cfg.sim, fmt=args.format)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_png(cfg.output_dir / "truth.png", truth)
    return 0


def _cmd_flow(args) -> int:
    cfg = resolve_config(None, _overrides(args, prefixes=("hs.",)))
    a = read_image(args.first)
    b = read_image(args.second)
    diag = open(args.trace, "w") if args.trace else None
    try:
        fl = horn_schunck(a, b, cfg.hs, diag=diag)
    finally:
        if diag:
            diag.close()
    write_flow(args.output, fl)
    return 0


def _cmd_deblur(args) -> int:
    cfg = resolve_config(None, _overrides(args, prefixes=("nltv.",)))
    img = read_image(args.input)
    diag = open(args.trace, "w") if args.trace else None
    try:
        out = nltv_deconvolve(img, cfg.nltv, diag=diag)
    finally:
        if diag:
            diag.close()
    write_png(args.output, out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"deturb: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"deturb: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
