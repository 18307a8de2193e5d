"""Single-node gravitational clustering.

Every incoming feature vector is stored as an immovable attractor of unit
mass (a *fixed* unit) and spawns one *mobile* unit next to it. Mobile units
fall through the field of all fixed units, lose speed to viscous damping and
fuse with each other when they come within the merge radius. A mobile unit
whose accumulated mass reaches ``m_min`` marks a cluster; its position is the
centroid estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Union

import numpy as np

from . import _kernels
from .exceptions import ConfigError, InputError

ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class GcParams:
    """Tuning constants of the dynamics.

    ``exponent`` is either a number (constant distance exponent) or the string
    ``"adaptive"`` for ``p = log10(r + 1) + 2``. ``eps_r=None`` resolves to
    ``sqrt(q)`` once the dimension is known.

    Three knobs keep the explicit unit-step integration stable:
    ``core_radius`` saturates each pairwise term at that distance (the pull of
    a fixed unit closer than it is that of one at the core radius, scaled by the
    actual offset), ``max_speed`` caps the speed of a mobile unit after each
    velocity update, and ``d_max`` drops force terms from fixed units farther
    away than that. ``core_radius=0`` with ``max_speed=d_max=inf`` runs the
    bare scheme.
    """

    g: float = 1.0
    exponent: Union[float, str] = ADAPTIVE
    k_damp: float = 0.8
    eps_r: Optional[float] = None
    r_x: float = 1.0
    m_min: float = 7.0
    d_max: float = 3.0
    delta_t: float = 1.0
    max_speed: float = 0.25
    core_radius: float = 0.3
    enumerate_every: int = 1

    def validate(self) -> None:
        if not (self.g > 0):
            raise ConfigError(f"g must be > 0, got {self.g}")
        if not (0 < self.k_damp < 1):
            raise ConfigError(f"k_damp must lie in (0, 1), got {self.k_damp}")
        if not (self.m_min > 1):
            raise ConfigError(f"m_min must be > 1, got {self.m_min}")
        if self.eps_r is not None and not (self.eps_r > 0):
            raise ConfigError(f"eps_r must be > 0, got {self.eps_r}")
        if not (self.r_x > 0):
            raise ConfigError(f"r_x must be > 0, got {self.r_x}")
        if not (self.d_max > 0):
            raise ConfigError(f"d_max must be > 0, got {self.d_max}")
        if not (self.delta_t > 0):
            raise ConfigError(f"delta_t must be > 0, got {self.delta_t}")
        if not (self.core_radius >= 0):
            raise ConfigError(f"core_radius must be >= 0, got {self.core_radius}")
        if not (self.max_speed > 0):
            raise ConfigError(f"max_speed must be > 0, got {self.max_speed}")
        if int(self.enumerate_every) != self.enumerate_every or self.enumerate_every < 1:
            raise ConfigError(f"enumerate_every must be a positive integer, got {self.enumerate_every}")
        if isinstance(self.exponent, str):
            if self.exponent != ADAPTIVE:
                raise ConfigError(f"unknown exponent rule {self.exponent!r}")
        elif not (self.exponent > 0):
            raise ConfigError(f"constant exponent must be > 0, got {self.exponent}")

    @property
    def adaptive(self) -> bool:
        return isinstance(self.exponent, str)

    def merge_radius(self, q: int) -> float:
        return math.sqrt(q) if self.eps_r is None else float(self.eps_r)

    def with_overrides(self, **kw) -> "GcParams":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class MobileMassUnit:
    position: np.ndarray
    velocity: np.ndarray
    mass: float = 1.0


@dataclass
class ClusterEstimate:
    k_hat: int
    centroids: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        assert self.k_hat == len(self.centroids) == len(self.masses)


class GcState:
    """Fixed units, mobile units and RNG of one clustering node.

    Mobile units live in parallel arrays (``positions``, ``velocities``,
    ``masses``); ``mobile_units`` gives an object view for inspection.
    A state is single-writer: callers serialize access.
    """

    def __init__(self, q: int, params: GcParams, seed: int):
        if int(q) != q or q < 1:
            raise ConfigError(f"dimension q must be a positive integer, got {q}")
        params.validate()
        self.q = int(q)
        self.params = params
        self.eps_r = params.merge_radius(self.q)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._fixed = np.empty((64, self.q))
        self.n_fixed = 0
        self.positions = np.empty((0, self.q))
        self.velocities = np.empty((0, self.q))
        self.masses = np.empty(0)
        self.n_ingested = 0
        self.n_steps = 0
        self.last_force_evaluations = 0
        self._last_estimate = ClusterEstimate(0, np.empty((0, self.q)), np.empty(0))

    @property
    def fixed_units(self) -> np.ndarray:
        return self._fixed[: self.n_fixed]

    @property
    def mobile_units(self) -> List[MobileMassUnit]:
        return [MobileMassUnit(p.copy(), v.copy(), float(m))
                for p, v, m in zip(self.positions, self.velocities, self.masses)]

    def _store_fixed(self, coords: np.ndarray) -> None:
        if self.n_fixed == len(self._fixed):
            grown = np.empty((2 * len(self._fixed), self.q))
            grown[: self.n_fixed] = self._fixed[: self.n_fixed]
            self._fixed = grown
        self._fixed[self.n_fixed] = coords
        self.n_fixed += 1


def new_state(q: int, params: Optional[GcParams] = None, seed: int = 0) -> GcState:
    return GcState(q, params or GcParams(), seed)


def _as_feature(state: GcState, d) -> np.ndarray:
    coords = np.asarray(d, dtype=float)
    if coords.shape != (state.q,):
        raise InputError(f"expected a feature vector of dimension {state.q}, got shape {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise InputError("feature vector contains non-finite entries")
    return coords


def ingest(state: GcState, d) -> None:
    """Store ``d`` as a fixed unit and emit one mobile unit around it.

    The emitted position is drawn from N(d, r_x * I), with zero velocity and
    unit mass.
    """
    coords = _as_feature(state, d)
    state._store_fixed(coords)
    x = state.rng.normal(coords, math.sqrt(state.params.r_x))
    state.positions = np.vstack([state.positions, x[None, :]])
    state.velocities = np.vstack([state.velocities, np.zeros((1, state.q))])
    state.masses = np.append(state.masses, 1.0)
    state.n_ingested += 1


def exponent(params: GcParams, x1, x2) -> float:
    if not params.adaptive:
        return float(params.exponent)
    r = float(np.linalg.norm(np.asarray(x1, float) - np.asarray(x2, float)))
    return math.log10(r + 1.0) + 2.0


def gravitational_force(state: GcState, unit: MobileMassUnit) -> np.ndarray:
    """Net pull of all stored fixed units on one mobile unit.

    Coincident fixed units and those beyond ``d_max`` are skipped; distances
    below ``core_radius`` are raised to it inside the power.
    """
    p = state.params
    x = np.asarray(unit.position, dtype=float)
    fixed = state.fixed_units
    if len(fixed) == 0:
        return np.zeros(state.q)
    diff = fixed - x
    r = np.sqrt(np.einsum("nq,nq->n", diff, diff))
    keep = (r > 0) & (r <= p.d_max)
    r, diff = r[keep], diff[keep]
    expo = np.log10(r + 1.0) + 2.0 if p.adaptive else float(p.exponent)
    # m_d = 1 for every fixed unit
    w = p.g * unit.mass * np.maximum(r, p.core_radius) ** (-expo)
    return w @ diff


def damping_force(unit: MobileMassUnit, k_damp: float) -> np.ndarray:
    return -k_damp * np.asarray(unit.velocity, dtype=float)


def _all_forces(state: GcState) -> np.ndarray:
    p = state.params
    p_const = 0.0 if p.adaptive else float(p.exponent)
    f, n = _kernels.forces(state.fixed_units, state.positions, state.masses,
                           p.g, p_const, p.adaptive, p.d_max, p.core_radius)
    state.last_force_evaluations = n
    return f


def step(state: GcState) -> ClusterEstimate:
    """Advance every mobile unit by one time step, merge, and enumerate.

    All forces are evaluated on the pre-step configuration before any unit
    moves, so the result does not depend on unit order.
    """
    p = state.params
    if len(state.masses):
        f_grav = _all_forces(state)
        f_damp = -p.k_damp * state.velocities
        v = (f_grav + f_damp) / state.masses[:, None] * p.delta_t + state.velocities
        if math.isfinite(p.max_speed):
            speed = np.sqrt(np.einsum("mq,mq->m", v, v))
            fast = speed > p.max_speed
            v[fast] *= (p.max_speed / speed[fast])[:, None]
        state.velocities = v
        state.positions = v * p.delta_t + state.positions
        combine_units(state)
    state.n_steps += 1
    if state.n_steps % p.enumerate_every == 0:
        state._last_estimate = enumerate_clusters(state)
    return state._last_estimate


def combine_units(state: GcState) -> None:
    """Fuse mobile units closer than the merge radius.

    Candidate pairs (distance <= eps_r) are visited in increasing distance.
    Of each pair, the unit with the smaller mean distance to all live units
    absorbs the other (ties go to the lower index); the absorbed unit and
    every remaining pair that mentions it are dropped. Survivors keep their
    own position and velocity, and are re-indexed in their original order.
    """
    n = len(state.masses)
    if n < 2:
        return
    pos = state.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("abq,abq->ab", diff, diff))
    ia, ib = np.triu_indices(n, k=1)
    d = dist[ia, ib]
    close = d <= state.eps_r
    if not close.any():
        return
    ia, ib, d = ia[close], ib[close], d[close]
    order = np.lexsort((ib, ia, d))

    alive = np.ones(n, dtype=bool)
    masses = state.masses.copy()
    for k in order:
        i, j = ia[k], ib[k]
        if not (alive[i] and alive[j]):
            continue
        # the 1/|U| factor is common to both and cancels in the comparison
        si = dist[i, alive].sum()
        sj = dist[j, alive].sum()
        keep, drop = (i, j) if si <= sj else (j, i)
        masses[keep] += masses[drop]
        alive[drop] = False

    state.positions = state.positions[alive]
    state.velocities = state.velocities[alive]
    state.masses = masses[alive]


def enumerate_clusters(state: GcState) -> ClusterEstimate:
    heavy = state.masses >= state.params.m_min
    return ClusterEstimate(int(heavy.sum()), state.positions[heavy].copy(), state.masses[heavy].copy())


def run_stream(state: GcState, stream: Iterable) -> List[ClusterEstimate]:
    out = []
    for d in stream:
        ingest(state, d)
        out.append(step(state))
    return out
