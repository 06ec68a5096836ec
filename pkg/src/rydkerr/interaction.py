"""Effective polariton potentials."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class TwoBodyPotential:
    """V(x) = depth / (1 + (x / xi)**6)."""

    depth: float
    xi: float

    def __post_init__(self):
        if not self.xi > 0:
            raise ValidationError(f"blockade radius must be positive, got {self.xi}", "potential.xi")

    @classmethod
    def from_params(cls, params):
        return cls(depth=params.potential_depth, xi=params.blockade_radius)

    def __call__(self, x):
        return evaluate_v(self, x)


def evaluate_v(pot, x):
    x = np.abs(np.asarray(x, dtype=float))
    out = pot.depth / (1.0 + (x / pot.xi) ** 6)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class NBodyPotential:
    """Permutation-symmetric n-body potential U_n(x_1, ..., x_n).

    ``kernel`` takes ``arity`` broadcastable arrays of lab positions.
    ``range`` bounds the pairwise separations beyond which U_n is negligible.
    """

    arity: int
    kernel: Callable
    range: float

    def __post_init__(self):
        if self.arity < 3:
            raise ValidationError(f"n-body arity must be >= 3, got {self.arity}", "u3.arity")
        if not self.range > 0:
            raise ValidationError("range must be positive", "u3.range")

    def __call__(self, *xs):
        return self.kernel(*xs)

    def symmetry_defect(self, samples=64, scale=None, seed=0):
        """Largest |U(p(x)) - U(x)| over random tuples and all permutations p."""
        rng = np.random.default_rng(seed)
        scale = self.range if scale is None else scale
        pts = rng.uniform(-scale, scale, size=(samples, self.arity))
        base = np.asarray(self.kernel(*pts.T), dtype=float)
        worst = 0.0
        for perm in itertools.permutations(range(self.arity)):
            vals = np.asarray(self.kernel(*pts[:, perm].T), dtype=float)
            worst = max(worst, float(np.max(np.abs(vals - base))))
        return worst


def make_constant_u3(amplitude, box_halfwidth):
    """Three-body test potential: ``amplitude`` while all pairwise gaps are <= ``box_halfwidth``."""
    if not box_halfwidth > 0:
        raise ValidationError("box_halfwidth must be positive", "u3.box_halfwidth")

    def kernel(x1, x2, x3):
        x1, x2, x3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, x3)))
        spread = np.maximum(np.maximum(x1, x2), x3) - np.minimum(np.minimum(x1, x2), x3)
        out = np.where(spread <= box_halfwidth, float(amplitude), 0.0)
        return out if out.ndim else float(out)

    return NBodyPotential(arity=3, kernel=kernel, range=float(box_halfwidth))
