"""Layered run configuration.

Values resolve as: built-in defaults <- config file <- command-line
flags. The file format is plain text key=value with dotted keys
(``hs.alpha=0.05``); blank lines and '#' comments are ignored. Unknown
keys and unparsable values are errors that name the key and line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .centroid import CentroidParams
from .flow import HSParams
from .nltv import NLTVParams
from .simulate import SimParams

STAGES = ("A", "B", "C", "D", "E")


class ConfigError(ValueError):
    pass


# key -> (type tag, default, help)
SCHEMA: dict[str, tuple[str, object, str]] = {
    "input.dir": ("str", "", "directory of numbered input frames"),
    "input.simulate": ("bool", False, "generate the input with the turbulence simulator"),
    "output_dir": ("str", "out", "directory for stage images and the run report"),
    "emit_stages": ("stages", "A,B,C,D,E", "comma-separated subset of A,B,C,D,E to write"),
    "diagnostics": ("bool", False, "dump intermediate images and solver traces"),
    "threads": ("int", 1, "worker cap; 1 guarantees bit-exact reproducibility"),
    "hs.alpha": ("float", 0.02, "flow smoothness weight"),
    "hs.max_iters": ("int", 500, "flow sweeps per pyramid level"),
    "hs.tol": ("float", 1e-4, "flow convergence threshold (px)"),
    "hs.pyramid_levels": ("int", 3, "coarse-to-fine levels"),
    "hs.pyramid_scale": ("float", 0.5, "downsampling factor per level"),
    "centroid.max_corrections": ("int", 10, "centroid correction iterations"),
    "centroid.correction_tol": ("float", 0.05, "relative norm change that stops correcting"),
    "centroid.reference_index": ("int", 0, "frame used as the reference"),
    "nltv.alpha": ("float", 0.002, "deconvolution regularization weight"),
    "nltv.h": ("float", 0.05, "patch-similarity scaling"),
    "nltv.a": ("float", 1.0, "Gaussian patch mask std dev"),
    "nltv.patch_radius": ("int", 2, "patch radius in px"),
    "nltv.window_radius": ("int", 7, "search window radius in px"),
    "nltv.kernel_sigma": ("float", 1.0, "blur kernel std dev to deconvolve"),
    "nltv.max_iters": ("int", 150, "descent iterations"),
    "nltv.step0": ("float", 0.25, "initial descent step"),
    "nltv.weight_keep": ("int", 10, "strongest neighbors kept per pixel"),
    "sim.n_frames": ("int", 10, "simulated sequence length"),
    "sim.amplitude": ("float", 2.0, "max displacement (px)"),
    "sim.smoothness": ("float", 4.0, "deformation smoothing sigma (px)"),
    "sim.blur_sigma": ("float", 1.0, "per-frame blur std dev"),
    "sim.noise_sigma": ("float", 0.01, "additive noise std dev"),
    "sim.seed": ("int", 42, "generator seed"),
    "sim.zero_mean": ("bool", True, "subtract the mean deformation (truth = ideal centroid)"),
    "sim.truth": ("str", "", "ground-truth image path (empty: built-in scene)"),
    "sim.size": ("int", 128, "built-in scene edge length"),
}

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def parse_value(key: str, raw: str):
    """Parse a raw string for a schema key; ConfigError on bad input."""
    if key not in SCHEMA:
        raise ConfigError(f"unknown key '{key}'")
    tag = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"expected a boolean, got '{raw}'")
        if tag == "stages":
            stages = tuple(s.strip().upper() for s in raw.split(",") if s.strip())
            bad = [s for s in stages if s not in STAGES]
            if bad:
                raise ValueError(f"unknown stage(s) {bad}; valid stages are {','.join(STAGES)}")
            if not stages:
                raise ValueError("emit_stages must name at least one stage")
            return tuple(s for s in STAGES if s in stages)
        return raw
    except ValueError as exc:
        raise ConfigError(f"key '{key}': {exc}") from exc


def parse_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file '{path}' does not exist")
    values: dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, sep, raw = text.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got '{text}'")
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        try:
            values[key] = parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


@dataclass
class PipelineConfig:
    input_dir: Path | None
    simulate: bool
    output_dir: Path
    emit_stages: tuple[str, ...]
    diagnostics: bool
    threads: int
    hs: HSParams
    centroid: CentroidParams
    nltv: NLTVParams
    sim: SimParams
    sim_truth: Path | None
    sim_size: int


def resolve_config(config_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Merge defaults, an optional config file, and CLI overrides."""
    values = {key: entry[1] for key, entry in SCHEMA.items()}
    values["emit_stages"] = parse_value("emit_stages", values["emit_stages"])
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key '{key}'")
        if val is not None:
            values[key] = val

    try:
        hs = HSParams(
            alpha=values["hs.alpha"],
            max_iters=values["hs.max_iters"],
            tol=values["hs.tol"],
            pyramid_levels=values["hs.pyramid_levels"],
            pyramid_scale=values["hs.pyramid_scale"],
        )
        cen = CentroidParams(
            hs=hs,
            max_corrections=values["centroid.max_corrections"],
            correction_tol=values["centroid.correction_tol"],
            reference_index=values["centroid.reference_index"],
        )
        nl = NLTVParams(
            alpha=values["nltv.alpha"],
            h=values["nltv.h"],
            a=values["nltv.a"],
            patch_radius=values["nltv.patch_radius"],
            window_radius=values["nltv.window_radius"],
            kernel_sigma=values["nltv.kernel_sigma"],
            max_iters=values["nltv.max_iters"],
            step0=values["nltv.step0"],
            weight_keep=values["nltv.weight_keep"],
        )
        sim = SimParams(
            n_frames=values["sim.n_frames"],
            amplitude=values["sim.amplitude"],
            flow_smoothness=values["sim.smoothness"],
            blur_sigma=values["sim.blur_sigma"],
            noise_sigma=values["sim.noise_sigma"],
            seed=values["sim.seed"],
            zero_mean_flows=values["sim.zero_mean"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if values["threads"] < 1:
        raise ConfigError(f"threads must be >= 1, got {values['threads']}")
    if values["sim.size"] < 2:
        raise ConfigError(f"sim.size must be >= 2, got {values['sim.size']}")

    return PipelineConfig(
        input_dir=Path(values["input.dir"]) if values["input.dir"] else None,
        simulate=bool(values["input.simulate"]),
        output_dir=Path(values["output_dir"]),
        emit_stages=values["emit_stages"],
        diagnostics=bool(values["diagnostics"]),
        threads=int(values["threads"]),
        hs=hs,
        centroid=cen,
        nltv=nl,
        sim=sim,
        sim_truth=Path(values["sim.truth"]) if values["sim.truth"] else None,
        sim_size=int(values["sim.size"]),
    )
