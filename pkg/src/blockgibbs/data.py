"""Domain types shared by the samplers: observation table, family layout, state.

All types are immutable after construction except ModelState, which has a
single-writer contract: exactly one sampler mutates it at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

POISSON = "poisson"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class FamilyLayout:
    """Random-effect families: names, per-family level dictionaries, block offsets.

    ``level_names[k]`` lists family k's level strings in index order, so the
    string for 1-based level t is ``level_names[k][t - 1]``.
    """

    names: tuple[str, ...]
    level_names: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.names) != len(self.level_names):
            raise ValueError("names and level_names must have equal length")
        if len(self.names) == 0:
            raise ValueError("at least one family is required")
        for k, levels in enumerate(self.level_names):
            if len(levels) == 0:
                raise ValueError(f"family {self.names[k]!r} has no levels")
            if len(set(levels)) != len(levels):
                raise ValueError(f"family {self.names[k]!r} has duplicate level names")

    @property
    def family_count(self) -> int:
        return len(self.names)

    @cached_property
    def levels(self) -> tuple[int, ...]:
        """Per-family level counts L_k."""
        return tuple(len(v) for v in self.level_names)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """Cumulative totals T_0..T_F with T_0 = 0."""
        out = [0]
        for count in self.levels:
            out.append(out[-1] + count)
        return tuple(out)

    @property
    def total_effects(self) -> int:
        """Total random-effect count r."""
        return self.offsets[-1]

    def block(self, k: int) -> range:
        """Global 1-based effect ids belonging to family k."""
        return range(self.offsets[k] + 1, self.offsets[k + 1] + 1)

    @cached_property
    def encoders(self) -> tuple[dict[str, int], ...]:
        """Per-family map from level string to 1-based index."""
        return tuple(
            {name: t + 1 for t, name in enumerate(levels)}
            for levels in self.level_names
        )

    def encode(self, k: int, level: str) -> int:
        return self.encoders[k][level]

    def decode(self, k: int, index: int) -> str:
        return self.level_names[k][index - 1]


@dataclass
class ObservationTable:
    """Columnar observations: response y, offset/weight d, 1-based index matrix.

    d is the exposure offset for Poisson models and the known inverse residual
    variance for Gaussian models.  ``scale`` holds the per-row, per-family
    multipliers of the Gaussian model; None means all ones.  Index columns are
    stored Fortran-ordered so per-family column access is contiguous.
    """

    y: np.ndarray
    d: np.ndarray
    index: np.ndarray
    scale: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.d = np.ascontiguousarray(self.d, dtype=np.float64)
        self.index = np.asfortranarray(self.index, dtype=np.int64)
        if self.scale is not None:
            self.scale = np.asfortranarray(self.scale, dtype=np.float64)
        if self.index.ndim != 2:
            raise ValueError("index must be an n x F matrix")
        n = self.index.shape[0]
        if self.y.shape != (n,) or self.d.shape != (n,):
            raise ValueError("y, d, and index row counts disagree")
        if self.scale is not None and self.scale.shape != self.index.shape:
            raise ValueError("scale must match index's shape")

    @property
    def n(self) -> int:
        return self.index.shape[0]

    @property
    def family_count(self) -> int:
        return self.index.shape[1]

    def scale_col(self, k: int) -> np.ndarray | None:
        return None if self.scale is None else self.scale[:, k]


@dataclass
class ModelState:
    """Mutable sampler state: ragged effects, fixed effect, scales, cached predictions.

    b[k] stores family k's effects on the exp scale for Poisson models (all
    positive, prior mean 1) and on the linear scale for Gaussian models.
    ``pi`` caches the current length-n prediction vector; ``refresh_counter``
    counts amortized updates since the cache was last rebuilt from scratch.
    """

    kind: str
    b: list[np.ndarray]
    beta: float
    sigma: np.ndarray
    pi: np.ndarray | None = None
    refresh_counter: int = 0

    def __post_init__(self):
        if self.kind not in (POISSON, GAUSSIAN):
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.b = [np.ascontiguousarray(v, dtype=np.float64) for v in self.b]
        self.sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if len(self.b) != self.sigma.shape[0]:
            raise ValueError("b and sigma must cover the same families")

    @property
    def family_count(self) -> int:
        return len(self.b)


def initial_state(table: ObservationTable, layout: FamilyLayout, kind: str) -> ModelState:
    """Neutral starting point: unit/zero effects, sigma 1, method-of-moments beta."""
    if kind == POISSON:
        b = [np.ones(count) for count in layout.levels]
        total_y = float(table.y.sum())
        total_d = float(table.d.sum())
        beta = total_y / total_d if total_y > 0 and total_d > 0 else 1.0
    else:
        b = [np.zeros(count) for count in layout.levels]
        total_d = float(table.d.sum())
        beta = float(np.sum(table.d * table.y) / total_d) if total_d > 0 else 0.0
    return ModelState(kind=kind, b=b, beta=beta, sigma=np.ones(layout.family_count))


@dataclass
class FamilySuffStats:
    """The 2 L_k per-level aggregates a family's conditional draws depend on.

    Poisson: a = events (observed counts), b = pevents (predicted counts with
    the family's own effect removed).  Gaussian: a = error (weighted residual
    sums), b = invvar (weighted squared-scale sums).
    """

    kind: str
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.kind not in (POISSON, GAUSSIAN):
            raise ValueError(f"unknown stats kind {self.kind!r}")
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError("a and b must be equal-length vectors")

    @property
    def size(self) -> int:
        return self.a.shape[0]

    @property
    def events(self) -> np.ndarray:
        return self.a

    @property
    def pevents(self) -> np.ndarray:
        return self.b

    @property
    def error(self) -> np.ndarray:
        return self.a

    @property
    def invvar(self) -> np.ndarray:
        return self.b


CONJUGATE = "conjugate"
MIXTURE = "mixture"


@dataclass(frozen=True)
class PriorSpec:
    """Per-family prior: plain conjugate, or a neutral-spike-plus-slab mixture.

    For the mixture, ``weights`` is (spike, slab) and must sum to one; the
    spike sits at the multiplicatively neutral effect 1.0.  ``weight_grid``
    is the grid over which the spike weight is sampled jointly with sigma.
    """

    kind: str = CONJUGATE
    weights: tuple[float, float] = (0.5, 0.5)
    spike_loc: float = 1.0
    weight_grid: tuple[float, ...] = tuple(np.linspace(0.0, 1.0, 21))

    def __post_init__(self):
        if self.kind not in (CONJUGATE, MIXTURE):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == MIXTURE:
            if abs(sum(self.weights) - 1.0) > 1e-12:
                raise ValueError("mixture weights must sum to 1")
            if any(w < 0 for w in self.weights):
                raise ValueError("mixture weights must be nonnegative")
            if self.spike_loc != 1.0:
                raise ValueError("only the neutral spike location 1.0 is supported")
            if any(w < 0 or w > 1 for w in self.weight_grid):
                raise ValueError("weight grid must lie in [0, 1]")


@dataclass(frozen=True)
class Violation:
    """One constraint violation; ``row`` is the 1-based data row, or None."""

    row: int | None
    field: str
    message: str

    def __str__(self) -> str:
        where = f"row {self.row}: " if self.row is not None else ""
        return f"{where}{self.field}: {self.message}"


def validate(table: ObservationTable, layout: FamilyLayout, kind: str = POISSON) -> list[Violation]:
    """Check the table against its layout and the model-kind invariants.

    Returns a structured list of violations; the table is valid iff the list
    is empty.  Row numbers are 1-based data rows.
    """
    out: list[Violation] = []
    if table.family_count != layout.family_count:
        out.append(Violation(None, "index", "index column count does not match layout"))
        return out

    bad_d = np.nonzero(~(table.d > 0))[0]
    for j in bad_d:
        out.append(Violation(int(j) + 1, "d", f"nonpositive offset {table.d[j]!r}"))

    if kind == POISSON:
        bad_y = np.nonzero((table.y < 0) | (np.floor(table.y) != table.y))[0]
        for j in bad_y:
            out.append(Violation(int(j) + 1, "y", f"negative or non-integer count {table.y[j]!r}"))
        if table.scale is not None:
            out.append(Violation(None, "scale", "Poisson models do not accept a scale matrix"))

    for k in range(layout.family_count):
        col = table.index[:, k]
        bad = np.nonzero((col < 1) | (col > layout.levels[k]))[0]
        for j in bad:
            out.append(
                Violation(
                    int(j) + 1,
                    layout.names[k],
                    f"level index {col[j]} outside 1..{layout.levels[k]}",
                )
            )
    return out


def canonicalize(
    table: ObservationTable, layout: FamilyLayout
) -> tuple[ObservationTable, FamilyLayout, np.ndarray]:
    """Re-index levels lexicographically and sort rows into a canonical order.

    Any two tables holding the same multiset of rows (regardless of input row
    order or first-appearance level numbering) canonicalize to bitwise
    identical arrays, which makes downstream reductions and RNG consumption
    independent of input ordering.  Returns the new table, the re-indexed
    layout, and the row permutation applied.
    """
    remapped = np.empty_like(table.index)
    new_level_names = []
    for k in range(layout.family_count):
        order = sorted(range(len(layout.level_names[k])), key=lambda t: layout.level_names[k][t])
        new_level_names.append(tuple(layout.level_names[k][t] for t in order))
        remap = np.empty(len(order) + 1, dtype=np.int64)
        for new_idx, old_t in enumerate(order):
            remap[old_t + 1] = new_idx + 1
        remapped[:, k] = remap[table.index[:, k]]

    # Total order over rows: all index columns, then y, d, and scale columns.
    keys = [table.d, table.y]
    if table.scale is not None:
        keys = [table.scale[:, k] for k in range(table.family_count)] + keys
    keys += [remapped[:, k] for k in reversed(range(table.family_count))]
    perm = np.lexsort(keys)

    new_table = ObservationTable(
        y=table.y[perm],
        d=table.d[perm],
        index=remapped[perm],
        scale=None if table.scale is None else table.scale[perm],
    )
    new_layout = FamilyLayout(names=layout.names, level_names=tuple(new_level_names))
    return new_table, new_layout, perm
