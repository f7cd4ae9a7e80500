"""Trace containers, effective sample size, summaries, and the Geweke harness.

The Geweke check compares two simulators of the joint (parameters, data)
distribution: an exact one (parameters from the priors, data from the model)
and one that alternates a posterior scan with data regeneration.  If the scan
targets the correct posterior, every statistic of the joint distribution must
agree between the two arms up to Monte Carlo error, so the z-scores of a
fixed battery are asymptotically standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ScanConfig
from .data import GAUSSIAN, POISSON, ModelState, ObservationTable, FamilyLayout
from .gaussian import gaussian_scan, gauss_predict
from .kernels import predict_poisson
from .poisson import poisson_scan
from .rng import RngStream
from .sigma import SigmaGrid


@dataclass
class Trace:
    """Equal-length draw sequences per parameter plus a burn-in marker."""

    draws: dict[str, np.ndarray]
    burn_in: int = 0

    def __post_init__(self):
        self.draws = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in self.draws.items()}
        lengths = {v.shape[0] for v in self.draws.values()}
        if len(lengths) > 1:
            raise ValueError("all trace sequences must have equal length")
        if lengths and self.burn_in >= next(iter(lengths)):
            raise ValueError("burn-in must be smaller than the trace length")

    def kept(self, name: str) -> np.ndarray:
        return self.draws[name][self.burn_in:]


def ess(series) -> float:
    """Effective sample size n / (1 + 2 sum of autocorrelations).

    Autocorrelations are truncated by the initial-positive-sequence rule on
    consecutive pairs.  A constant series is defined to have ESS n.
    """
    x = np.ascontiguousarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("need a 1-D series of length >= 10")
    n = x.size
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return float(n)
    if not np.isfinite(var):
        raise ValueError("series is not finite")

    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]

    # Initial positive sequence: keep pair sums rho[2m] + rho[2m+1] while positive.
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        m += 1
    tau = max(tau, 1.0 / n)
    return float(n / tau)


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float
    q025: float
    q500: float
    q975: float
    ess: float


def summarize(trace: Trace) -> list[ParamSummary]:
    """Mean, sd, central quantiles (linear interpolation), and ESS per parameter."""
    out = []
    for name in trace.draws:
        kept = trace.kept(name)
        if kept.size == 0:
            raise ValueError(f"no draws left after burn-in for {name!r}")
        q = np.quantile(kept, [0.025, 0.5, 0.975])
        out.append(
            ParamSummary(
                name=name,
                mean=float(kept.mean()),
                sd=float(kept.std()),
                q025=float(q[0]),
                q500=float(q[1]),
                q975=float(q[2]),
                ess=ess(kept) if kept.size >= 10 else float(kept.size),
            )
        )
    return out


# --- Geweke joint-distribution check -----------------------------------------

@dataclass
class GewekeModel:
    """Toy model specification for the joint-distribution test.

    Priors must be proper: sigma_k uniform over the grid points, the fixed
    effect Gamma(1,1) for Poisson and N(0,1) for Gaussian.  The design
    (offsets and index assignments) is drawn once from ``design_seed`` and
    held fixed; only y is regenerated.
    """

    kind: str = POISSON
    n: int = 200
    levels: tuple[int, ...] = (10, 10)
    grid: SigmaGrid = field(default_factory=SigmaGrid.geometric)
    design_seed: int = 20240101
    offset_range: tuple[float, float] = (1.0, 100.0)
    gauss_beta_prior: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class GewekeStat:
    name: str
    marginal_mean: float
    successive_mean: float
    z: float


@dataclass
class GewekeReport:
    stats: list[GewekeStat]

    @property
    def max_abs_z(self) -> float:
        return max(abs(s.z) for s in self.stats)

    def passed(self, threshold: float = 4.0) -> bool:
        return all(np.isfinite(s.z) and abs(s.z) < threshold for s in self.stats)


def _build_design(model: GewekeModel) -> tuple[ObservationTable, FamilyLayout]:
    gen = RngStream(model.design_seed).generator
    f_count = len(model.levels)
    index = np.empty((model.n, f_count), dtype=np.int64)
    for k, count in enumerate(model.levels):
        index[:, k] = gen.integers(1, count + 1, size=model.n)
    lo, hi = model.offset_range
    if model.kind == POISSON:
        d = np.exp(gen.uniform(np.log(lo), np.log(hi), size=model.n))
    else:
        d = np.ones(model.n)
    table = ObservationTable(y=np.zeros(model.n), d=d, index=index)
    layout = FamilyLayout(
        names=tuple(f"f{k + 1}" for k in range(f_count)),
        level_names=tuple(
            tuple(f"f{k + 1}_{t}" for t in range(1, count + 1))
            for k, count in enumerate(model.levels)
        ),
    )
    return table, layout


def _battery(model: GewekeModel, beta, log_sigma, b_mean, y_mean):
    """Per-draw statistic matrix with one named column per battery entry."""
    names = ["beta", "beta_sq"]
    cols = [beta, beta * beta]
    for k in range(log_sigma.shape[1]):
        names += [f"log_sigma_{k + 1}", f"log_sigma_{k + 1}_sq"]
        cols += [log_sigma[:, k], log_sigma[:, k] ** 2]
    names.append("b_mean")
    cols.append(b_mean)
    if y_mean is not None:
        names.append("y_mean")
        cols.append(y_mean)
    return names, np.column_stack(cols)


def _prior_draws(model: GewekeModel, gen, count: int):
    """Vectorized prior draws of (beta, sigma, effects) for the marginal arm."""
    f_count = len(model.levels)
    sigma = model.grid.points[gen.integers(0, model.grid.size, size=(count, f_count))]
    if model.kind == POISSON:
        beta = gen.gamma(1.0, 1.0, size=count)
        b = [
            gen.gamma(sigma[:, k, None] ** -2.0, sigma[:, k, None] ** 2.0, size=(count, lk))
            for k, lk in enumerate(model.levels)
        ]
    else:
        m0, v0 = model.gauss_beta_prior
        beta = gen.normal(m0, np.sqrt(v0), size=count)
        b = [
            gen.normal(0.0, sigma[:, k, None], size=(count, lk))
            for k, lk in enumerate(model.levels)
        ]
    return beta, sigma, b


def _marginal_arm(model: GewekeModel, table, seed: int, count: int):
    gen = RngStream(seed, substream=101).generator
    beta, sigma, b = _prior_draws(model, gen, count)
    pred = np.broadcast_to(beta[:, None], (count, table.n)).copy()
    if model.kind == POISSON:
        pred *= table.d[None, :]
        for k in range(len(model.levels)):
            pred *= b[k][:, table.index[:, k] - 1]
        y = gen.poisson(pred) if table.n else np.zeros((count, 0))
    else:
        for k in range(len(model.levels)):
            pred += b[k][:, table.index[:, k] - 1]
        sd = 1.0 / np.sqrt(table.d)
        y = gen.normal(pred, sd[None, :]) if table.n else np.zeros((count, 0))
    b_mean = np.concatenate(b, axis=1).mean(axis=1)
    y_mean = y.mean(axis=1) if table.n else None
    return _battery(model, beta, np.log(sigma), b_mean, y_mean)


def _successive_arm(model: GewekeModel, table, layout, seed: int, count: int, stats_hook):
    rng = RngStream(seed, substream=202)
    gen = rng.generator
    beta0, sigma0, b0 = _prior_draws(model, gen, 1)
    state = ModelState(
        kind=model.kind,
        b=[v[0] for v in b0],
        beta=float(beta0[0]),
        sigma=sigma0[0],
    )
    config = ScanConfig(sigma_grid=model.grid)
    _regenerate_y(model, state, table, gen)

    rows = np.empty((count, 0))
    names = None
    betas = np.empty(count)
    sigmas = np.empty((count, len(model.levels)))
    b_means = np.empty(count)
    y_means = np.empty(count) if table.n else None
    for i in range(count):
        if model.kind == POISSON:
            poisson_scan(state, table, layout, None, config, rng, stats_hook=stats_hook)
        else:
            gaussian_scan(
                state,
                table,
                layout,
                config,
                rng,
                beta_prior=model.gauss_beta_prior,
                stats_hook=stats_hook,
            )
        _regenerate_y(model, state, table, gen)
        betas[i] = state.beta
        sigmas[i] = state.sigma
        b_means[i] = np.mean(np.concatenate(state.b))
        if y_means is not None:
            y_means[i] = table.y.mean()
    names, rows = _battery(model, betas, np.log(sigmas), b_means, y_means)
    return names, rows


def _regenerate_y(model: GewekeModel, state, table, gen) -> None:
    # The table is privately owned by the harness; y is replaced in place.
    if table.n == 0:
        return
    if model.kind == POISSON:
        table.y[:] = gen.poisson(predict_poisson(state, table))
    else:
        table.y[:] = gen.normal(gauss_predict(state, table), 1.0 / np.sqrt(table.d))


def geweke_check(
    model: GewekeModel,
    draws: int,
    seed: int = 0,
    *,
    stats_hook=None,
) -> GewekeReport:
    """Run both simulators for ``draws`` iterations and z-score the battery.

    The marginal arm is iid (plain standard errors); the successive arm is a
    Markov chain, so its standard errors are ESS-corrected.  ``stats_hook``
    lets tests corrupt the scan's sufficient statistics to confirm the check
    has power against a broken sampler.
    """
    table, layout = _build_design(model)
    names, mc = _marginal_arm(model, table, seed, draws)
    _, sc = _successive_arm(model, table, layout, seed, draws, stats_hook)

    stats = []
    for j, name in enumerate(names):
        m1, m2 = float(mc[:, j].mean()), float(sc[:, j].mean())
        se1 = float(mc[:, j].std()) / np.sqrt(draws)
        n_eff = ess(sc[:, j]) if draws >= 10 else float(draws)
        se2 = float(sc[:, j].std()) / np.sqrt(n_eff)
        denom = np.hypot(se1, se2)
        if denom == 0.0:
            z = 0.0 if m1 == m2 else np.inf
        else:
            z = (m1 - m2) / denom
        stats.append(GewekeStat(name, m1, m2, float(z)))
    return GewekeReport(stats)
