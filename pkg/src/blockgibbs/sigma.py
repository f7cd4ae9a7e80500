"""Prior-scale updates: griddy Gibbs draws, log-scale random-walk MH, grid argmax.

All three consume an unnormalized log marginal of sigma; constants dropped
from the marginal (anything data-dependent but sigma-free) cancel in the
normalization, so callers never need them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import categorical_draw, generator_of


@dataclass
class SigmaGrid:
    """Strictly increasing positive evaluation points for griddy draws.

    ``log_density`` keeps the most recent evaluated (unnormalized) log density
    for inspection; it is overwritten on every draw.
    """

    points: np.ndarray
    log_density: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 1 or self.points.size == 0:
            raise ValueError("grid needs at least one point")
        if np.any(self.points <= 0):
            raise ValueError("grid points must be positive")
        if np.any(np.diff(self.points) <= 0):
            raise ValueError("grid points must be strictly increasing")

    @classmethod
    def geometric(cls, lo: float = 0.05, hi: float = 5.0, count: int = 40) -> "SigmaGrid":
        if count == 1:
            return cls(points=np.array([float(lo)]))
        return cls(points=np.geomspace(lo, hi, count))

    @property
    def size(self) -> int:
        return self.points.size


def _evaluate(log_marginal, grid: SigmaGrid, log_density) -> np.ndarray:
    if log_density is None:
        log_density = np.array([float(log_marginal(s)) for s in grid.points])
    else:
        log_density = np.asarray(log_density, dtype=np.float64)
        if log_density.shape != grid.points.shape:
            raise ValueError("log_density must match the grid")
    if np.any(np.isnan(log_density)) or np.any(log_density == np.inf):
        raise ValueError("log marginal is not finite on the grid")
    if np.all(log_density == -np.inf):
        raise ValueError("log marginal is -inf everywhere on the grid (degenerate statistics)")
    grid.log_density = log_density
    return log_density


def griddy_draw(log_marginal, grid: SigmaGrid, rng, *, log_density=None) -> float:
    """Draw one grid point with probability softmax(log marginal + flat prior).

    ``log_marginal`` maps sigma to an unnormalized log density; callers that
    already evaluated the whole grid can pass the vector via ``log_density``
    and skip the function entirely.
    """
    ld = _evaluate(log_marginal, grid, log_density)
    w = np.exp(ld - np.max(ld))
    return float(grid.points[categorical_draw(w, rng)])


def argmax_sigma(log_marginal, grid: SigmaGrid, *, log_density=None) -> float:
    """Grid point maximizing the objective; ties break toward the smallest sigma."""
    ld = _evaluate(log_marginal, grid, log_density)
    return float(grid.points[int(np.argmax(ld))])


def mh_draw(current: float, step: float, log_marginal, rng) -> float:
    """One random-walk Metropolis-Hastings update of sigma on the log scale.

    The proposal is lambda' = log(current) + step * z.  With a flat prior on
    sigma itself, the density in lambda carries the Jacobian factor e^lambda,
    which enters the acceptance ratio as exp(lambda' - lambda).
    """
    if current <= 0:
        raise ValueError("current sigma must be positive")
    if step < 0:
        raise ValueError("step must be nonnegative")
    if step == 0.0:
        return float(current)
    gen = generator_of(rng)
    lam = np.log(current)
    prop = lam + step * gen.standard_normal()
    sigma_prop = float(np.exp(prop))
    log_accept = float(log_marginal(sigma_prop)) - float(log_marginal(current)) + (prop - lam)
    if np.log(gen.random()) < log_accept:
        return sigma_prop
    return float(current)
