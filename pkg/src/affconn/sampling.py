"""Deterministic low-discrepancy sampling over coordinate boxes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc


@dataclass
class SampleBox:
    """Halton point set on a box, reproducible from the seed.

    ``lo``/``hi`` bound every variable unless overridden per name.  The
    same (names, count, seed) triple always yields the same points.
    """

    lo: float = -1.0
    hi: float = 1.0
    count: int = 64
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def bounds(self, name: str):
        return self.overrides.get(name, (self.lo, self.hi))

    def points(self, names) -> np.ndarray:
        names = list(names)
        if not names:
            return np.zeros((1, 0))
        halton = qmc.Halton(d=len(names), scramble=True, seed=self.seed)
        unit = halton.random(self.count)
        los = np.array([self.bounds(n)[0] for n in names])
        his = np.array([self.bounds(n)[1] for n in names])
        return qmc.scale(unit, los, his)

    def envs(self, names):
        names = list(names)
        for row in self.points(names):
            yield dict(zip(names, row))
