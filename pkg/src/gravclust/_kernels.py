"""Compiled inner loops for the force field."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def accumulate_forces(fixed, n_fixed, pos, mass, g, p_const, adaptive, d_max, r_core, out):
    """Add the gravitational pull of ``fixed[:n_fixed]`` on every row of ``pos`` into ``out``.

    Returns the number of (unit, fixed) pairs that contributed, i.e. pairs that
    were neither coincident nor beyond ``d_max``.
    """
    n_mobile, q = pos.shape
    d_max2 = d_max * d_max
    evaluated = 0
    for i in range(n_mobile):
        for n in range(n_fixed):
            r2 = 0.0
            for k in range(q):
                diff = fixed[n, k] - pos[i, k]
                r2 += diff * diff
            if r2 == 0.0 or r2 > d_max2:
                continue
            r = math.sqrt(r2)
            if adaptive:
                p = math.log10(r + 1.0) + 2.0
            else:
                p = p_const
            w = g * mass[i] * max(r, r_core) ** (-p)
            for k in range(q):
                out[i, k] += w * (fixed[n, k] - pos[i, k])
            evaluated += 1
    return evaluated


def forces(fixed, pos, mass, g, p_const, adaptive, d_max, r_core):
    out = np.zeros_like(pos)
    n = accumulate_forces(fixed, fixed.shape[0], pos, mass, float(g), float(p_const),
                          bool(adaptive), float(d_max), float(r_core), out)
    return out, n


def warm_up() -> None:
    """Compile (or load from cache) the kernel so later timings exclude it."""
    forces(np.zeros((1, 2)), np.ones((1, 2)), np.ones(1), 1.0, 2.0, True, math.inf, 0.0)
