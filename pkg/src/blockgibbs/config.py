"""Sampler and run configuration records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sigma import SigmaGrid

GRID = "grid"
MH = "mh"


@dataclass
class ScanConfig:
    """Knobs one Gibbs scan depends on.

    ``sigma_grid`` applies to every family unless ``family_grids`` overrides
    per family.  ``refresh_cadence`` is the number of amortized prediction
    updates allowed before a full recompute.
    """

    sigma_grid: SigmaGrid = field(default_factory=SigmaGrid.geometric)
    sigma_method: str = GRID
    mh_step: float = 0.3
    refresh_cadence: int = 100
    family_grids: tuple[SigmaGrid, ...] | None = None

    def __post_init__(self):
        if self.sigma_method not in (GRID, MH):
            raise ValueError(f"unknown sigma method {self.sigma_method!r}")
        if self.refresh_cadence < 1:
            raise ValueError("refresh cadence must be at least 1")

    def grid_for(self, k: int) -> SigmaGrid:
        if self.family_grids is not None:
            return self.family_grids[k]
        return self.sigma_grid


@dataclass
class ScanRecord:
    """Draws produced by one scan: fixed effect, prior scales, mixture weights.

    ``weight[k]`` is NaN for families without a mixture prior.
    """

    beta: float
    sigma: np.ndarray
    weight: np.ndarray | None = None


@dataclass
class RunConfig:
    """One batch run, as assembled from a config file and CLI flags."""

    model: str = "poisson"
    data: str | None = None
    response: str | None = None
    offset: str | None = None
    families: tuple[str, ...] = ()
    scales: tuple[str, ...] | None = None
    iters: int = 1000
    burnin: int = 0
    thin: int = 1
    seed: int = 0
    sigma_method: str = GRID
    sigma_grid: tuple[float, float, int] = (0.05, 5.0, 40)
    mh_step: float = 0.3
    refresh_cadence: int = 100
    priors: tuple[str, ...] = ()
    algorithm: str = "gibbs"
    mcem_samples: int = 5
    min_levels_warning: int = 50
    effects: bool = True
    effect_draws: bool = False
    out: str = "."

    def __post_init__(self):
        if self.model not in ("poisson", "gaussian"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.algorithm not in ("gibbs", "mcem", "minimal-mcem"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.burnin < 0 or self.iters <= self.burnin:
            raise ValueError("need iterations > burn-in >= 0")
        if self.thin < 1:
            raise ValueError("thinning must be >= 1")

    def build_grid(self) -> SigmaGrid:
        lo, hi, count = self.sigma_grid
        return SigmaGrid.geometric(lo, hi, int(count))
