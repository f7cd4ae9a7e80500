"""Gaussian blocked Gibbs: weighted-residual statistics, normal marginals, scans.

The response is modeled as y ~ N(prediction, 1/d) with d a known per-row
inverse residual variance.  A family's conditional draws depend on 2 L_k
statistics: invvar_t (weighted squared scales) and error_t (weighted
residuals with the family's own contribution restored).  Integrating the
N(0, sigma^2) prior out of the level likelihood

    l_t(u) = -invvar_t u^2 / 2 + error_t u + const

gives each level's marginal factor
sqrt(a / (invvar_t + a)) * exp(error_t^2 / (2 (invvar_t + a))), a = sigma^-2.
"""

from __future__ import annotations

import numpy as np

from .config import MH, ScanConfig, ScanRecord
from .data import GAUSSIAN, FamilyLayout, FamilySuffStats, ModelState, ObservationTable
from .kernels import apply_family_update, gather, refresh_cache, sum_by
from .rng import normal_draw
from .sigma import SigmaGrid, griddy_draw, mh_draw


def gaussian_suff_stats(k: int, table: ObservationTable, state: ModelState) -> FamilySuffStats:
    """invvar = SumBy_k(scale^2 d); error = SumBy_k((y - pi + own) scale d).

    ``own`` restores the family's contribution (gathered effects times scale)
    so the residual excludes only family k.  Requires a consistent cache.
    """
    n_levels = state.b[k].shape[0]
    s = table.scale_col(k)
    gathered = gather(state.b[k], table.index[:, k])
    if s is None:
        invvar = sum_by(k, table.d, table.index, n_levels)
        resid = (table.y - state.pi + gathered) * table.d
    else:
        invvar = sum_by(k, s * s * table.d, table.index, n_levels)
        resid = (table.y - state.pi + gathered * s) * s * table.d
    error = sum_by(k, resid, table.index, n_levels)
    return FamilySuffStats(GAUSSIAN, error, invvar)


def _level_log_marginals(a: float, error: np.ndarray, invvar: np.ndarray) -> np.ndarray:
    prec = invvar + a
    return 0.5 * np.log(a / prec) + 0.5 * error * error / prec


def log_gauss_marginal(sigma: float, stats: FamilySuffStats) -> float:
    """Unnormalized log marginal likelihood of sigma with the effects integrated out."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = float(np.sum(_level_log_marginals(sigma**-2, stats.error, stats.invvar)))
    if not np.isfinite(out):
        raise ArithmeticError("gaussian marginal is not finite")
    return out


def gauss_marginal_grid(grid: SigmaGrid, stats: FamilySuffStats) -> np.ndarray:
    """log_gauss_marginal at every grid point, vectorized."""
    a = grid.points[:, None] ** -2.0
    prec = stats.invvar[None, :] + a
    terms = 0.5 * np.log(a / prec) + 0.5 * stats.error[None, :] ** 2 / prec
    return terms.sum(axis=1)


def sample_b_family_gauss(sigma: float, stats: FamilySuffStats, rng) -> np.ndarray:
    """Conditional draws: N(error_t / (invvar_t + a), (invvar_t + a)^-1), a = sigma^-2."""
    prec = stats.invvar + sigma**-2
    return normal_draw(stats.error / prec, prec**-0.5, rng)


def sample_beta_gauss(
    table: ObservationTable,
    state: ModelState,
    rng,
    *,
    prior_mean: float | None = None,
    prior_var: float | None = None,
) -> float:
    """Fixed-effect draw; flat prior by default, conjugate normal if given.

    Flat prior: N(beta + sum(d (y - pi)) / sum(d), 1 / sum(d)).  The cached
    predictions shift additively by the change in beta.
    """
    d_sum = float(table.d.sum())
    resid_sum = float(np.sum(table.d * (table.y - state.pi)))
    if prior_var is None:
        if d_sum <= 0:
            raise ValueError("flat-prior beta update requires data (sum of d > 0)")
        mean = state.beta + resid_sum / d_sum
        var = 1.0 / d_sum
    else:
        prec = 1.0 / prior_var + d_sum
        mean = ((prior_mean or 0.0) / prior_var + resid_sum + state.beta * d_sum) / prec
        var = 1.0 / prec
    beta_new = normal_draw(mean, var**0.5, rng)
    state.pi += beta_new - state.beta
    state.beta = beta_new
    return beta_new


def gaussian_scan(
    state: ModelState,
    table: ObservationTable,
    layout: FamilyLayout,
    config: ScanConfig,
    rng,
    *,
    beta_prior: tuple[float, float] | None = None,
    workspace: dict | None = None,
    stats_hook=None,
) -> ScanRecord:
    """One blocked scan: beta, then (sigma_k, B_k) per family with additive cache upkeep.

    ``beta_prior`` optionally supplies a proper (mean, variance) normal prior
    for the fixed effect (the default matches the flat-prior update).
    """
    refresh_cache(state, table)
    if beta_prior is None:
        sample_beta_gauss(table, state, rng)
    else:
        sample_beta_gauss(table, state, rng, prior_mean=beta_prior[0], prior_var=beta_prior[1])

    for k in range(layout.family_count):
        stats = _stats_with_cached_invvar(k, table, state, workspace)
        if stats_hook is not None:
            stats = stats_hook(k, stats)
        grid = config.grid_for(k)
        if config.sigma_method == MH:
            sig = mh_draw(
                float(state.sigma[k]),
                config.mh_step,
                lambda s: log_gauss_marginal(s, stats),
                rng,
            )
        else:
            sig = griddy_draw(None, grid, rng, log_density=gauss_marginal_grid(grid, stats))
        state.sigma[k] = sig
        b_new = sample_b_family_gauss(sig, stats, rng)
        apply_family_update(state, k, b_new, table, cadence=config.refresh_cadence)

    return ScanRecord(beta=state.beta, sigma=state.sigma.copy())


def _stats_with_cached_invvar(k, table, state, workspace) -> FamilySuffStats:
    # invvar depends only on the fixed scale and d columns; cache it per run.
    if workspace is None:
        return gaussian_suff_stats(k, table, state)
    key = ("invvar", k)
    n_levels = state.b[k].shape[0]
    s = table.scale_col(k)
    if key not in workspace:
        weights = table.d if s is None else s * s * table.d
        workspace[key] = sum_by(k, weights, table.index, n_levels)
    gathered = gather(state.b[k], table.index[:, k])
    if s is None:
        resid = (table.y - state.pi + gathered) * table.d
    else:
        resid = (table.y - state.pi + gathered * s) * s * table.d
    error = sum_by(k, resid, table.index, n_levels)
    return FamilySuffStats(GAUSSIAN, error, workspace[key])
