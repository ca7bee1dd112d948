"""Bit-accurate MX datapath emulator and NPU performance model."""

from ._mxdp import (
    SaturationError,
    channel_activity,
    cost_report,
    critical_width_table,
    decode_element,
    encode_element,
    formats,
    gemm_fp64,
    mx_gemm,
    peak_throughput_gops,
    quantize,
    run_experiment,
    simulate,
    simulate_file,
    tile_cycles,
)

__version__ = "0.1.0"

__all__ = [
    "SaturationError",
    "channel_activity",
    "cost_report",
    "critical_width_table",
    "decode_element",
    "encode_element",
    "formats",
    "gemm_fp64",
    "mx_gemm",
    "peak_throughput_gops",
    "quantize",
    "run_experiment",
    "simulate",
    "simulate_file",
    "tile_cycles",
]
