"""Distributed gravitational clustering over a simulated sensor network.

Each round follows an adapt-then-combine pattern in lockstep:

1. every node buffers its own new feature vector;
2. in ``FEATURES_AND_ESTIMATES`` mode each node also pulls the current vectors
   of its neighborhood, and ingests everything it holds;
3. every node runs one clustering step and obtains a local count;
4. local counts are exchanged within neighborhoods (unless non-cooperative);
5. each node takes the median of the counts it gathered.

There is no message loss or latency; phases are separated by a global barrier.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import core
from .exceptions import ConfigError, InputError


class ExchangeMode(str, enum.Enum):
    FEATURES_AND_ESTIMATES = "both"
    ESTIMATES_ONLY = "estimates"
    NON_COOPERATIVE = "non-coop"


@dataclass(frozen=True)
class NetworkTopology:
    node_positions: np.ndarray
    # B_j, starting with j itself, then neighbors by increasing distance
    neighborhoods: Tuple[Tuple[int, ...], ...]

    @property
    def n_nodes(self) -> int:
        return len(self.neighborhoods)


def build_topology(node_positions, k_neighbors: int) -> NetworkTopology:
    """Connect every node to its ``k_neighbors`` nearest nodes (Euclidean).

    Distance ties are broken by node index.
    """
    pos = np.asarray(node_positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    n = len(pos)
    if k_neighbors < 0 or k_neighbors >= n:
        raise ConfigError(f"k_neighbors must lie in [0, {n - 1}], got {k_neighbors}")
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    idx = np.arange(n)
    hoods = []
    for j in range(n):
        others = idx[idx != j]
        order = others[np.lexsort((others, dist[j, others]))]
        hoods.append((j, *(int(l) for l in order[:k_neighbors])))
    return NetworkTopology(pos, tuple(hoods))


def random_placement(n_nodes: int, seed: int, dim: int = 2) -> np.ndarray:
    """Uniform node placement in the unit square."""
    return np.random.default_rng(seed).random((n_nodes, dim))


def fuse_median(estimates: Sequence[int]) -> int:
    """Median of integer estimates; the lower middle value for even counts."""
    vals = sorted(int(e) for e in estimates)
    if not vals:
        raise ValueError("cannot fuse an empty set of estimates")
    return vals[(len(vals) - 1) // 2]


@dataclass
class NodeState:
    gc: core.GcState
    inbox_features: List[Tuple[np.ndarray, int]] = field(default_factory=list)
    inbox_estimates: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class NodeEstimate:
    k_hat: int
    k_local: int
    centroids: np.ndarray
    masses: np.ndarray


def make_nodes(n_nodes: int, q: int, params: Optional[core.GcParams] = None,
               seeds: Optional[Sequence[int]] = None) -> List[NodeState]:
    seeds = list(range(n_nodes)) if seeds is None else list(seeds)
    if len(seeds) != n_nodes:
        raise ConfigError("need one seed per node")
    return [NodeState(core.new_state(q, params, s)) for s in seeds]


def run_round(nodes: Sequence[NodeState], topology: NetworkTopology, mode: ExchangeMode,
              incoming: Sequence[Optional[np.ndarray]]) -> List[NodeEstimate]:
    """One synchronous round; ``incoming[j]`` is node j's new vector or None."""
    mode = ExchangeMode(mode)
    n = len(nodes)
    if topology.n_nodes != n or len(incoming) != n:
        raise ConfigError("nodes, topology and incoming vectors disagree in size")

    own = []
    for node, d in zip(nodes, incoming):
        if d is None:
            own.append(None)
            continue
        d = np.asarray(d, dtype=float)
        if d.shape != (node.gc.q,):
            raise InputError(f"node vector of shape {d.shape}, expected ({node.gc.q},)")
        own.append(d)

    # phases 1-2: buffer own vector, optionally pull the neighborhood's vectors
    for j, node in enumerate(nodes):
        senders = topology.neighborhoods[j] if mode == ExchangeMode.FEATURES_AND_ESTIMATES else (j,)
        node.inbox_features = [(own[l], l) for l in senders if own[l] is not None]

    # phase 3: adapt
    local = []
    for node in nodes:
        for d, _ in node.inbox_features:
            core.ingest(node.gc, d)
        node.inbox_features = []
        local.append(core.step(node.gc))

    # phases 4-5: combine
    out = []
    for j, node in enumerate(nodes):
        if mode == ExchangeMode.NON_COOPERATIVE:
            k_hat = local[j].k_hat
        else:
            node.inbox_estimates = [(l, local[l].k_hat) for l in topology.neighborhoods[j]]
            k_hat = fuse_median([k for _, k in node.inbox_estimates])
            node.inbox_estimates = []
        out.append(NodeEstimate(k_hat, local[j].k_hat, local[j].centroids, local[j].masses))
    return out


def run_network(nodes: Sequence[NodeState], topology: NetworkTopology, mode: ExchangeMode,
                streams: Sequence[Sequence[np.ndarray]]) -> List[List[NodeEstimate]]:
    """Drive ``run_round`` over per-node streams of equal length."""
    lengths = {len(s) for s in streams}
    if len(lengths) > 1:
        raise InputError("per-node streams must have equal length")
    T = lengths.pop() if lengths else 0
    return [run_round(nodes, topology, mode, [s[t] for s in streams]) for t in range(T)]
