"""Monte Carlo EM drivers for the Gamma-Poisson model.

Two variants: the blocked MCEM whose M-step maximizes the marginal over T
posterior samples of the other families' effects, and a minimal one-sample
variant that reuses the current predictions.  Both finish an outer iteration
with the multiplicative fixed-effect update beta <- beta * sum(y) / sum(pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScanConfig, ScanRecord
from .data import POISSON, FamilyLayout, FamilySuffStats, ModelState, ObservationTable
from .kernels import apply_family_update, gather, refresh_cache, sum_by
from .poisson import (
    _cached,
    conjugate_marginal_grid,
    lgamma_events_for_grid,
    poisson_suff_stats,
    sample_b_family,
)
from .sigma import argmax_sigma


@dataclass
class MCEMConfig:
    """inner_samples is the per-family sample count T of the blocked variant."""

    inner_samples: int = 5
    max_iters: int = 100
    tol: float = 1e-3

    def __post_init__(self):
        if self.inner_samples < 1:
            raise ValueError("need at least one inner sample")


def _beta_ratio_update(state: ModelState, table: ObservationTable) -> None:
    # Stationarity condition of the marginal likelihood: E[sum(pi)] = sum(y).
    ratio = float(table.y.sum()) / float(state.pi.sum())
    state.beta *= ratio
    state.pi *= ratio


def _family_grid_pieces(state, table, config, workspace, k):
    grid = config.grid_for(k)
    n_levels = state.b[k].shape[0]
    events = _cached(
        workspace, ("events", k), lambda: sum_by(k, table.y, table.index, n_levels)
    )
    lg = _cached(
        workspace, ("poisson_lgamma", k), lambda: lgamma_events_for_grid(grid, events)
    )
    return grid, n_levels, events, lg


def mcem_scan(
    state: ModelState,
    table: ObservationTable,
    layout: FamilyLayout,
    config: ScanConfig,
    mcem: MCEMConfig,
    rng,
    *,
    workspace: dict | None = None,
) -> ScanRecord:
    """One outer iteration of the blocked MCEM.

    For each family k: run T full conditional passes over every family's
    effects (sigma held fixed), recording family k's pevents after each pass;
    then set sigma_k to the grid argmax of the summed log marginals.  The
    prediction cache is rebuilt before each inner pass, which also clears
    amortization drift.
    """
    for k in range(layout.family_count):
        grid, n_levels, events, lg = _family_grid_pieces(state, table, config, workspace, k)
        objective = np.zeros(grid.size)
        for _ in range(mcem.inner_samples):
            refresh_cache(state, table)
            for f in range(layout.family_count):
                stats_f = poisson_suff_stats(f, table, state)
                b_new = sample_b_family(float(state.sigma[f]), stats_f, rng)
                apply_family_update(state, f, b_new, table, cadence=config.refresh_cadence)
            gathered = gather(state.b[k], table.index[:, k])
            pevents = sum_by(k, state.pi / gathered, table.index, n_levels)
            objective += conjugate_marginal_grid(
                grid, FamilySuffStats(POISSON, events, pevents), lg
            )
        state.sigma[k] = argmax_sigma(None, grid, log_density=objective)

    _beta_ratio_update(state, table)
    return ScanRecord(beta=state.beta, sigma=state.sigma.copy())


def minimal_mcem_scan(
    state: ModelState,
    table: ObservationTable,
    layout: FamilyLayout,
    config: ScanConfig,
    rng,
    *,
    workspace: dict | None = None,
) -> ScanRecord:
    """One iteration of the minimal variant: argmax sigma_k from the current
    predictions, one conditional effect draw per family, amortized cache
    updates, then the multiplicative beta update."""
    refresh_cache(state, table)
    for k in range(layout.family_count):
        grid, n_levels, events, lg = _family_grid_pieces(state, table, config, workspace, k)
        gathered = gather(state.b[k], table.index[:, k])
        pevents = sum_by(k, state.pi / gathered, table.index, n_levels)
        stats = FamilySuffStats(POISSON, events, pevents)
        state.sigma[k] = argmax_sigma(
            None, grid, log_density=conjugate_marginal_grid(grid, stats, lg)
        )
        b_new = sample_b_family(float(state.sigma[k]), stats, rng)
        apply_family_update(state, k, b_new, table, cadence=config.refresh_cadence)

    _beta_ratio_update(state, table)
    return ScanRecord(beta=state.beta, sigma=state.sigma.copy())


def fit_mcem(
    state: ModelState,
    table: ObservationTable,
    layout: FamilyLayout,
    config: ScanConfig,
    mcem: MCEMConfig,
    rng,
    *,
    minimal: bool = False,
    workspace: dict | None = None,
) -> list[ScanRecord]:
    """Iterate outer MCEM iterations until the relative sigma change drops
    below tol (for a whole iteration) or the cap is hit; returns the history."""
    if workspace is None:
        workspace = {}
    history: list[ScanRecord] = []
    for _ in range(mcem.max_iters):
        prev = state.sigma.copy()
        if minimal:
            record = minimal_mcem_scan(state, table, layout, config, rng, workspace=workspace)
        else:
            record = mcem_scan(state, table, layout, config, mcem, rng, workspace=workspace)
        history.append(record)
        rel = np.max(np.abs(state.sigma - prev) / np.maximum(prev, 1e-12))
        if rel < mcem.tol:
            break
    return history
