"""Picklable initial conditions and test functions.

Plain classes instead of lambdas so replica blocks can cross process
boundaries with their payload intact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HeavisideLeft:
    """1 on the negative half line."""

    def __call__(self, x):
        return np.where(np.asarray(x) < 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class HeavisideRight:
    """1 on the positive half line."""

    def __call__(self, x):
        return np.where(np.asarray(x) > 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class Constant:
    level: float = 1.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=np.float64), self.level)


@dataclass(frozen=True)
class GaussianBump:
    center: float = 0.0
    sigma: float = 1.0
    height: float = 1.0

    def __call__(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.center) / self.sigma
        return self.height * np.exp(-0.5 * z * z)



def heat_step_solution(x, t: float) -> np.ndarray:
    """Closed-form heat evolution of the left step: Phi(-x / sqrt(t))."""
    x = np.asarray(x, dtype=np.float64)
    if t <= 0.0:
        return np.where(x < 0.0, 1.0, 0.0)
    from scipy.stats import norm

    return norm.cdf(-x / math.sqrt(t))
