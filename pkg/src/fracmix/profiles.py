"""Named non-negative initial data, normalized to sup 1 and zero on Gamma_0."""
from __future__ import annotations

import numpy as np

from .mesh import DiscreteDomain

PROFILES = ("sine_compatible", "bump", "plateau", "zero")


def _axis_factor(t, low: bool, high: bool):
    if low and high:
        return np.sin(np.pi * t)
    if low:
        return np.sin(0.5 * np.pi * t)
    if high:
        return np.cos(0.5 * np.pi * t)
    return np.ones_like(t)


def gamma0_distance(dom: DiscreteDomain) -> np.ndarray:
    x = dom.node_coords
    d = np.full(dom.n_nodes, np.inf)
    for side in dom.gamma0_sides:
        axis = 0 if side in ("left", "right") else 1
        d = np.minimum(d, x[:, axis] if side in ("left", "bottom") else 1.0 - x[:, axis])
    return d


def initial_profile(dom: DiscreteDomain, name: str) -> np.ndarray:
    x = dom.node_coords
    g0 = set(dom.gamma0_sides)
    if name == "sine_compatible":
        u = _axis_factor(x[:, 0], "left" in g0, "right" in g0)
        if dom.dimension == 2:
            u = u * _axis_factor(x[:, 1], "bottom" in g0, "top" in g0)
    elif name == "bump":
        r2 = np.sum((x - 0.5) ** 2, axis=1) / 0.3 ** 2
        u = np.clip(1.0 - r2, 0.0, None) ** 2
    elif name == "plateau":
        u = np.clip(gamma0_distance(dom) / 0.2, 0.0, 1.0)
    elif name == "zero":
        u = np.zeros(dom.n_nodes)
    else:
        raise ValueError(f"unknown initial profile {name!r}; choose from {PROFILES}")
    u = np.where(np.abs(u) < 1e-15, 0.0, u)
    u[dom.gamma0_nodes] = 0.0
    sup = u.max()
    return u / sup if sup > 0 else u
