"""Streaming cluster enumeration by simulated gravitational dynamics."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ADAPTIVE,
    ClusterEstimate,
    GcParams,
    GcState,
    MobileMassUnit,
    combine_units,
    damping_force,
    enumerate_clusters,
    gravitational_force,
    ingest,
    new_state,
    run_stream,
    step,
)
from .diffusion import ExchangeMode, NetworkTopology, build_topology, fuse_median, run_round  # noqa: E402
from .exceptions import ConfigError, InputError  # noqa: E402

__all__ = [
    "ADAPTIVE", "ClusterEstimate", "ConfigError", "ExchangeMode", "GcParams", "GcState", "InputError",
    "MobileMassUnit", "NetworkTopology", "build_topology", "combine_units", "damping_force",
    "enumerate_clusters", "fuse_median", "gravitational_force", "ingest", "new_state", "run_round",
    "run_stream", "step",
]
