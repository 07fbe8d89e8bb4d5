"""deturb: restore a still image from a turbulence-degraded sequence.

Pipeline: Horn-Schunck optical flow -> centroid of deformations with
iterative correction -> registration and averaging -> nonlocal-TV
deconvolution, plus a deterministic turbulence simulator for
verification.
"""

from .centroid import (
    CentroidParams,
    CentroidResult,
    average_flow,
    correction_step,
    initial_centroid,
    iterate_centroid,
    register_and_average,
    restore_sequence,
)
from .flow import HSParams, flow_residual, horn_schunck, hs_energy
from .grid import (
    convolve_gaussian,
    flow_rms,
    gaussian_kernel,
    rmse,
    sample_bilinear,
    spatial_gradient,
    temporal_derivative,
    temporal_mean,
    warp,
    zero_flow,
)
from .kernels import backend
from .nltv import (
    NLTVParams,
    WeightGraph,
    build_weights,
    load_weight_graph,
    nltv_deconvolve,
    nltv_energy,
    nltv_gradient,
    save_weight_graph,
)
from .simulate import SimParams, random_smooth_flow, simulate_sequence, synthetic_scene

__version__ = "0.1.0"

__all__ = [
    "CentroidParams",
    "CentroidResult",
    "HSParams",
    "NLTVParams",
    "SimParams",
    "WeightGraph",
    "average_flow",
    "backend",
    "build_weights",
    "convolve_gaussian",
    "correction_step",
    "flow_residual",
    "flow_rms",
    "gaussian_kernel",
    "horn_schunck",
    "hs_energy",
    "initial_centroid",
    "iterate_centroid",
    "load_weight_graph",
    "nltv_deconvolve",
    "nltv_energy",
    "nltv_gradient",
    "random_smooth_flow",
    "register_and_average",
    "restore_sequence",
    "rmse",
    "sample_bilinear",
    "save_weight_graph",
    "simulate_sequence",
    "spatial_gradient",
    "synthetic_scene",
    "temporal_derivative",
    "temporal_mean",
    "warp",
    "zero_flow",
]
