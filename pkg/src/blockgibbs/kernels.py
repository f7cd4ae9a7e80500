"""Row-level O(n) primitives: prediction, exclusion, grouped sums, cache upkeep.

These dominate runtime on large tables.  Everything is vectorized over rows;
a full prediction costs O(nF) and each per-family operation costs O(n + L_k).
"""

from __future__ import annotations

import math

import numpy as np

from .data import GAUSSIAN, POISSON, ModelState, ObservationTable


def gather(values: np.ndarray, index_col: np.ndarray) -> np.ndarray:
    """Spread per-level values onto rows: out[j] = values[index_col[j] - 1]."""
    return values[index_col - 1]


def predict_poisson(state: ModelState, table: ObservationTable) -> np.ndarray:
    """Full Poisson prediction beta * d * prod_k b_k[index_k], componentwise."""
    out = table.d.copy()
    for k in range(table.family_count):
        out *= state.b[k][table.index[:, k] - 1]
    out *= state.beta
    return out


def gauss_predict(state: ModelState, table: ObservationTable) -> np.ndarray:
    """Full Gaussian prediction beta + sum_k b_k[index_k] * scale_k."""
    out = np.full(table.n, float(state.beta))
    for k in range(table.family_count):
        g = state.b[k][table.index[:, k] - 1]
        s = table.scale_col(k)
        if s is None:
            out += g
        else:
            out += g * s
    return out


def predict_excluding(pi: np.ndarray, gathered: np.ndarray) -> np.ndarray:
    """Divide one family's gathered effects back out of a Poisson prediction."""
    return pi / gathered


def refresh_cache(state: ModelState, table: ObservationTable) -> np.ndarray:
    """Recompute the prediction cache from scratch and reset the drift counter."""
    if state.kind == POISSON:
        state.pi = predict_poisson(state, table)
    else:
        state.pi = gauss_predict(state, table)
    state.refresh_counter = 0
    return state.pi


def sum_by(
    k: int,
    v: np.ndarray,
    index: np.ndarray,
    n_levels: int,
    *,
    compensated: bool = False,
) -> np.ndarray:
    """Grouped sum over family k's levels: out[t] = sum of v[j] where index[j,k] = t+1.

    Levels with no rows get exactly 0.  The default accumulates sequentially in
    float64; ``compensated=True`` switches to exact per-level summation (slow,
    for verification use).
    """
    idx0 = index[:, k] - 1
    if not compensated:
        return np.bincount(idx0, weights=v, minlength=n_levels)
    out = np.zeros(n_levels)
    order = np.argsort(idx0, kind="stable")
    sorted_idx = idx0[order]
    sorted_v = v[order]
    bounds = np.searchsorted(sorted_idx, np.arange(n_levels + 1))
    for t in range(n_levels):
        lo, hi = bounds[t], bounds[t + 1]
        if hi > lo:
            out[t] = math.fsum(sorted_v[lo:hi])
    return out


def apply_family_update(
    state: ModelState,
    k: int,
    b_new: np.ndarray,
    table: ObservationTable,
    *,
    cadence: int = 100,
) -> None:
    """Install new effects for family k and maintain the prediction cache.

    Poisson predictions update multiplicatively (pi *= b_new/b_old gathered),
    Gaussian ones additively with the scale weights.  Every ``cadence``-th
    update rebuilds the cache from scratch instead, bounding drift from
    accumulated rounding.
    """
    b_new = np.ascontiguousarray(b_new, dtype=np.float64)
    if b_new.shape != state.b[k].shape:
        raise ValueError("replacement effects have the wrong length")
    if state.pi is None:
        state.b[k] = b_new
        refresh_cache(state, table)
        return
    if state.refresh_counter + 1 >= cadence:
        state.b[k] = b_new
        refresh_cache(state, table)
        return

    idx0 = table.index[:, k] - 1
    old = state.b[k]
    if state.kind == POISSON:
        state.pi *= b_new[idx0] / old[idx0]
    else:
        delta = b_new[idx0] - old[idx0]
        s = table.scale_col(k)
        if s is None:
            state.pi += delta
        else:
            state.pi += delta * s
    state.b[k] = b_new
    state.refresh_counter += 1
