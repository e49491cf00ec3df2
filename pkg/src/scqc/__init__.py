"""Surface-code control stack: decoder graphs, noise, Union-Find and windowed
decoding, the pseudo-instruction / wire-command instruction set, an
electronics simulator and workload generators."""

from .decoders import OracleDecoder, UnionFindDecoder, oracle_min_weight_match, uf_decode, validate_correction
from .errors import (
    InfeasibleError,
    ParameterError,
    ScheduleError,
    UnconfiguredEntryError,
    UnmappedAddressError,
    WindowDecodeError,
)
from .noise import NoiseParams, SyndromeVolume, detection_event_stats, sample_errors, syndrome_bandwidth
from .sandwich import decode_windowed, logical_outcome, soc_feasibility, throughput_metric
from .surface_graph import CodeParams, DecoderGraph, build_bell_graph, build_memory_graph, plan_windows

__version__ = "0.1.0"

__all__ = [
    "CodeParams", "DecoderGraph", "InfeasibleError", "NoiseParams", "OracleDecoder", "ParameterError",
    "ScheduleError", "SyndromeVolume", "UnconfiguredEntryError", "UnionFindDecoder", "UnmappedAddressError",
    "WindowDecodeError", "build_bell_graph", "build_memory_graph", "decode_windowed", "detection_event_stats",
    "logical_outcome", "oracle_min_weight_match", "plan_windows", "sample_errors", "soc_feasibility",
    "syndrome_bandwidth", "throughput_metric", "uf_decode", "validate_correction",
]
