"""Gamma-Poisson blocked Gibbs machinery.

A family's update touches the data only through 2 L_k sufficient statistics:
per-level observed counts (events) and per-level predicted counts with the
family's own effect divided out (pevents).  Integrating the Gamma(a, a)
prior, a = sigma^-2, against the level likelihood

    l_t(u) = -pevents_t * u + events_t * log(u) + const

gives a closed-form marginal: each level contributes the normalizer ratio
C(a, a) / C(a + events_t, a + pevents_t) with C(s, r) = r^s / Gamma(s).
The additive constant is never computed; griddy normalization absorbs it.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .config import MH, ScanConfig, ScanRecord
from .data import (
    MIXTURE,
    POISSON,
    FamilyLayout,
    FamilySuffStats,
    ModelState,
    ObservationTable,
    PriorSpec,
)
from .kernels import apply_family_update, gather, predict_excluding, refresh_cache, sum_by
from .rng import categorical_draw, gamma_draw, generator_of
from .sigma import SigmaGrid, griddy_draw, mh_draw


def poisson_suff_stats(k: int, table: ObservationTable, state: ModelState) -> FamilySuffStats:
    """events = SumBy_k(y); pevents = SumBy_k(pi / gathered own effects).

    Requires a consistent prediction cache in ``state.pi``.
    """
    n_levels = state.b[k].shape[0]
    events = sum_by(k, table.y, table.index, n_levels)
    gathered = gather(state.b[k], table.index[:, k])
    pevents = sum_by(k, predict_excluding(state.pi, gathered), table.index, n_levels)
    return FamilySuffStats(POISSON, events, pevents)


def _level_log_marginals(a: float, events: np.ndarray, pevents: np.ndarray) -> np.ndarray:
    """Per-level log of C(a,a)/C(a+e, a+p): the slab term of every marginal here."""
    return (
        a * np.log(a)
        - gammaln(a)
        - (a + events) * np.log(a + pevents)
        + gammaln(a + events)
    )


def log_conjugate_marginal(sigma: float, stats: FamilySuffStats) -> float:
    """Unnormalized log marginal likelihood of sigma with the effects integrated out."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = float(np.sum(_level_log_marginals(sigma**-2, stats.events, stats.pevents)))
    if not np.isfinite(out):
        raise ArithmeticError("conjugate marginal is not finite")
    return out


def conjugate_marginal_grid(
    grid: SigmaGrid,
    stats: FamilySuffStats,
    lgamma_events: np.ndarray | None = None,
) -> np.ndarray:
    """log_conjugate_marginal at every grid point in one vectorized pass.

    ``lgamma_events`` may carry the precomputed per-point sums of
    loggamma(a + events_t); events never change over a run, so callers can
    cache it (see ``lgamma_events_for_grid``).
    """
    a = grid.points**-2.0
    e = stats.events
    p = stats.pevents
    if lgamma_events is None:
        lgamma_events = lgamma_events_for_grid(grid, e)
    head = stats.size * (a * np.log(a) - gammaln(a))
    tail = ((a[:, None] + e[None, :]) * np.log(a[:, None] + p[None, :])).sum(axis=1)
    return head + lgamma_events - tail


def lgamma_events_for_grid(grid: SigmaGrid, events: np.ndarray) -> np.ndarray:
    a = grid.points**-2.0
    return gammaln(a[:, None] + events[None, :]).sum(axis=1)


def sample_b_family(sigma: float, stats: FamilySuffStats, rng) -> np.ndarray:
    """Conditional effect draws: Gamma(events_t + a, pevents_t + a), a = sigma^-2."""
    a = sigma**-2
    return gamma_draw(stats.events + a, stats.pevents + a, rng)


def sample_beta(table: ObservationTable, state: ModelState, rng) -> float:
    """Fixed-effect draw under a Gamma(1,1) prior; rescales the cached predictions.

    The posterior is Gamma(1 + sum(y), 1 + sum(pi)/beta) because sum(pi)/beta
    is the total predicted count at beta = 1.
    """
    shape = 1.0 + float(table.y.sum())
    rate = 1.0 + float(state.pi.sum()) / state.beta
    beta_new = gamma_draw(shape, rate, rng)
    state.pi *= beta_new / state.beta
    state.beta = beta_new
    return beta_new


# --- Spike-and-slab mixture prior -------------------------------------------

def _spike_level_terms(pevents: np.ndarray) -> np.ndarray:
    # Level likelihood at the neutral effect: l_t(1) minus the dropped constant.
    return -pevents


def _mix_level_terms(w: float, slab_terms: np.ndarray, spike_terms: np.ndarray) -> np.ndarray:
    if w <= 0.0:
        return slab_terms
    if w >= 1.0:
        return spike_terms
    return np.logaddexp(np.log(w) + spike_terms, np.log1p(-w) + slab_terms)


def spike_slab_log_marginal(w: float, sigma: float, stats: FamilySuffStats) -> float:
    """Marginal with a two-part prior: point mass at 1 (weight w) plus Gamma slab."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("spike weight must lie in [0, 1]")
    slab = _level_log_marginals(sigma**-2, stats.events, stats.pevents)
    spike = _spike_level_terms(stats.pevents)
    return float(np.sum(_mix_level_terms(w, slab, spike)))


def spike_posterior_prob(w: float, sigma: float, stats: FamilySuffStats) -> np.ndarray:
    """Per-level posterior probability that the effect sits exactly at 1."""
    if w <= 0.0:
        return np.zeros(stats.size)
    if w >= 1.0:
        return np.ones(stats.size)
    slab = _level_log_marginals(sigma**-2, stats.events, stats.pevents)
    spike = _spike_level_terms(stats.pevents)
    log_spike = np.log(w) + spike
    return np.exp(log_spike - np.logaddexp(log_spike, np.log1p(-w) + slab))


def spike_slab_sample_b(w: float, sigma: float, stats: FamilySuffStats, rng) -> np.ndarray:
    """Per level: effect 1.0 with its posterior spike probability, else a slab draw.

    Consumes one uniform and one Gamma variate per level regardless of the
    outcome, so the stream layout does not depend on the draws themselves.
    """
    q = spike_posterior_prob(w, sigma, stats)
    gen = generator_of(rng)
    u = gen.random(stats.size)
    slab = sample_b_family(sigma, stats, rng)
    return np.where(u < q, 1.0, slab)


def spike_slab_draw(
    prior: PriorSpec,
    grid: SigmaGrid,
    stats: FamilySuffStats,
    rng,
) -> tuple[float, float]:
    """Joint griddy draw of (spike weight, slab sigma) over the 2-D hyper-grid."""
    slab_matrix = np.empty((grid.size, stats.size))
    for gi, av in enumerate(grid.points**-2.0):
        slab_matrix[gi] = _level_log_marginals(av, stats.events, stats.pevents)
    spike = _spike_level_terms(stats.pevents)

    w_grid = np.asarray(prior.weight_grid, dtype=np.float64)
    joint = np.empty((w_grid.size, grid.size))
    for wi, w in enumerate(w_grid):
        joint[wi] = _mix_level_terms(w, slab_matrix, spike[None, :]).sum(axis=1)
    if np.any(np.isnan(joint)):
        raise ArithmeticError("spike-and-slab marginal is not finite on the grid")
    flat = joint.ravel()
    idx = categorical_draw(np.exp(flat - np.max(flat)), rng)
    wi, gi = divmod(idx, grid.size)
    return float(w_grid[wi]), float(grid.points[gi])


# --- Full scan ---------------------------------------------------------------

def poisson_scan(
    state: ModelState,
    table: ObservationTable,
    layout: FamilyLayout,
    priors: list[PriorSpec] | None,
    config: ScanConfig,
    rng,
    *,
    workspace: dict | None = None,
    stats_hook=None,
) -> ScanRecord:
    """One blocked Gibbs scan: beta, then (sigma_k, B_k) jointly per family.

    The prediction cache is rebuilt from scratch at the top of every scan.
    Each family draws sigma_k with its effects integrated out, then the
    effects conditionally, then updates the cache amortized.  ``workspace``
    (optional) caches scan-invariant pieces across calls; ``stats_hook`` is
    test instrumentation that may replace a family's sufficient statistics.
    """
    refresh_cache(state, table)
    sample_beta(table, state, rng)

    any_mixture = priors is not None and any(p.kind == MIXTURE for p in priors)
    weights = np.full(layout.family_count, np.nan) if any_mixture else None

    for k in range(layout.family_count):
        stats = _stats_with_cached_events(k, table, state, workspace)
        if stats_hook is not None:
            stats = stats_hook(k, stats)
        grid = config.grid_for(k)
        prior = priors[k] if priors is not None else None

        if prior is not None and prior.kind == MIXTURE:
            w, sig = spike_slab_draw(prior, grid, stats, rng)
            weights[k] = w
            state.sigma[k] = sig
            b_new = spike_slab_sample_b(w, sig, stats, rng)
        else:
            if config.sigma_method == MH:
                sig = mh_draw(
                    float(state.sigma[k]),
                    config.mh_step,
                    lambda s: log_conjugate_marginal(s, stats),
                    rng,
                )
            else:
                # Events never change over a run, so the loggamma sums keyed on
                # them are cacheable; hooked statistics bypass the cache.
                lg = _cached(
                    workspace if stats_hook is None else None,
                    ("poisson_lgamma", k),
                    lambda: lgamma_events_for_grid(grid, stats.events),
                )
                sig = griddy_draw(
                    None, grid, rng, log_density=conjugate_marginal_grid(grid, stats, lg)
                )
            state.sigma[k] = sig
            b_new = sample_b_family(sig, stats, rng)

        apply_family_update(state, k, b_new, table, cadence=config.refresh_cadence)

    return ScanRecord(beta=state.beta, sigma=state.sigma.copy(), weight=weights)


def _stats_with_cached_events(k, table, state, workspace) -> FamilySuffStats:
    n_levels = state.b[k].shape[0]
    events = _cached(
        workspace,
        ("events", k),
        lambda: sum_by(k, table.y, table.index, n_levels),
    )
    gathered = gather(state.b[k], table.index[:, k])
    pevents = sum_by(k, predict_excluding(state.pi, gathered), table.index, n_levels)
    return FamilySuffStats(POISSON, events, pevents)


def _cached(workspace, key, compute):
    if workspace is None:
        return compute()
    if key not in workspace:
        workspace[key] = compute()
    return workspace[key]
