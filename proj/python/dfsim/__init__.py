"""Python interface to the dataflow accelerator modeling toolkit."""

from ._core import (
    ExpertModel,
    Infeasible,
    OpGraph,
    PlatformConfig,
    builtin_platform,
    decode_throughput_bound,
    footprint,
    operational_intensity,
    plan_fusion_json,
    resolve_platform,
    serve_summary,
    switch_time,
)

__all__ = [
    "ExpertModel",
    "Infeasible",
    "OpGraph",
    "PlatformConfig",
    "builtin_platform",
    "decode_throughput_bound",
    "footprint",
    "operational_intensity",
    "plan_fusion_json",
    "resolve_platform",
    "serve_summary",
    "switch_time",
]
