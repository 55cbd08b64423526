"""Manufactured solutions used for verification.

Each entry is a callable f(t, p, xi) that satisfies the kinetic equation for
a specific operator subset: the first three are exact for pure electric-field
advection (collisions and radiation off); "sin_exp" additionally satisfies
the constant-coefficient collision model (friction zero, parallel and
pitch-angle diffusion both equal to epsilon), its amplitude decaying like
exp(-epsilon * t).
"""
from __future__ import annotations

import numpy as np


def make_solution(name: str, E: float, epsilon: float = 0.0):
    if name == "exponential":
        def f(t, p, xi):
            et = E * t
            return np.exp(-p * p - 2.0 * p * xi * et - et * et)
    elif name == "sin":
        def f(t, p, xi):
            return np.sin(p * xi + E * t)
    elif name == "cos2":
        def f(t, p, xi):
            return np.cos(p * xi + E * t) ** 2
    elif name == "sin_exp":
        def f(t, p, xi):
            return np.sin(p * xi + E * t) * np.exp(-epsilon * t)
    else:
        raise ValueError(f"unknown manufactured solution {name!r}")
    f.name = name
    f.needs_collisions = name == "sin_exp"
    return f


SOLUTIONS = ("exponential", "sin", "cos2", "sin_exp")
