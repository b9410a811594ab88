"""Kernel-localized maximum rank correlation for exclusive-covariate coefficients.

For dimension ``d`` the objective is

    Q(b) = sum_{i<j} 1(Y_i > Y_j) 1(v_i b > v_j b) K(w_i - w_j)

where ``v`` holds the exclusive columns of ``X_d`` (first coefficient fixed
at 1) and ``w`` every other covariate of both equations. The objective is a
step function in ``b``, so it is maximized by nested grid search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .likelihood import Dataset

MIN_N_BANDWIDTH = 10


class MrcError(ValueError):
    pass


class FlatObjectiveError(MrcError):
    pass


@dataclass(frozen=True)
class MrcConfig:
    """Settings for one MRC fit.

    Attributes:
        dim: Response dimension, 1 or 2.
        exclusive: Exclusive columns of ``X_dim`` (0-based indices or names);
            the first one carries the unit-normalized coefficient.
        bandwidths: Per localized column; ``None`` uses :func:`default_bandwidth`.
        levels: Grid refinement levels.
        points: Grid points per coordinate and level.
        search_range: Coarse grid interval for each free coefficient.
        seed: Recorded for provenance; the search itself is deterministic.
    """

    dim: int = 1
    exclusive: tuple = (0,)
    bandwidths: Optional[tuple] = None
    kernel: str = "gaussian"
    levels: int = 3
    points: int = 41
    search_range: tuple = (-3.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise MrcError("dim must be 1 or 2")
        if len(self.exclusive) < 1:
            raise MrcError("the exclusive column set is empty")
        if self.kernel != "gaussian":
            raise MrcError(f"unsupported kernel {self.kernel!r}")
        if self.bandwidths is not None and not all(h > 0 for h in self.bandwidths):
            raise MrcError("bandwidths must be positive")
        if self.levels < 1 or self.points < 2:
            raise MrcError("need at least one level and two grid points")
        if not self.search_range[1] > self.search_range[0]:
            raise MrcError("search range must be increasing")


@dataclass(frozen=True, eq=False)
class MrcDesign:
    """Response, exclusive block and localized block pulled out of a dataset."""

    y: np.ndarray
    excl: np.ndarray
    local: np.ndarray
    excl_names: tuple
    local_names: tuple


def split_columns(data: Dataset, cfg: MrcConfig) -> MrcDesign:
    """Separate exclusive columns from the covariates to localize on.

    Localized columns are all non-exclusive columns of both equations, with
    exact duplicates (a regressor shared by both equations) kept once.
    """
    X_own, names_own = (data.X1, data.names1) if cfg.dim == 1 else (data.X2, data.names2)
    X_other, names_other = (data.X2, data.names2) if cfg.dim == 1 else (data.X1, data.names1)
    idx = []
    for c in cfg.exclusive:
        if isinstance(c, str):
            if c not in names_own:
                raise MrcError(f"unknown column {c!r} for dimension {cfg.dim}")
            c = list(names_own).index(c)
        if not 0 <= int(c) < X_own.shape[1]:
            raise MrcError(f"column index {c} out of range")
        idx.append(int(c))
    if len(set(idx)) != len(idx):
        raise MrcError("exclusive columns repeat")
    rest = [c for c in range(X_own.shape[1]) if c not in idx]
    cols = [X_own[:, c] for c in rest] + [X_other[:, c] for c in range(X_other.shape[1])]
    names = [f"x{cfg.dim}:{names_own[c]}" for c in rest]
    names += [f"x{3 - cfg.dim}:{n}" for n in names_other]
    keep_cols, keep_names = [], []
    for col, name in zip(cols, names):
        if not any(np.array_equal(col, k) for k in keep_cols):
            keep_cols.append(col)
            keep_names.append(name)
    y = data.y1 if cfg.dim == 1 else data.y2
    local = np.column_stack(keep_cols) if keep_cols else np.zeros((data.n, 0))
    return MrcDesign(y, X_own[:, idx], local, tuple(names_own[c] for c in idx), tuple(keep_names))


def default_bandwidth(data: Dataset, cfg: MrcConfig) -> np.ndarray:
    """Rule-of-thumb ``h_c = 1.06 sd_c N^(-1/6)`` for each localized column.

    Returns the vector of ``h_c``; the bandwidth matrix is ``diag(h_c^2)``.
    """
    if data.n < MIN_N_BANDWIDTH:
        raise MrcError(f"default bandwidth needs at least {MIN_N_BANDWIDTH} observations")
    des = split_columns(data, cfg)
    if des.local.shape[1] == 0:
        return np.zeros(0)
    sd = des.local.std(axis=0, ddof=1)
    if np.any(sd == 0):
        bad = [n for n, s in zip(des.local_names, sd) if s == 0]
        raise MrcError(f"constant localized column(s) {bad}: bandwidth undefined")
    return 1.06 * sd * data.n ** (-1.0 / 6.0)


def kernel_weights(local_i, local_j, h) -> np.ndarray:
    """Gaussian product kernel ``exp(-0.5 sum_c ((w_ic - w_jc)/h_c)^2)``.

    The normalizing constant is dropped: it rescales the objective without
    moving its maximizer.
    """
    if local_i.shape[1] == 0:
        return np.ones(local_i.shape[0])
    # tiny bandwidths overflow z*z to inf, which correctly gives weight 0
    with np.errstate(over="ignore"):
        z = (local_i - local_j) / h
        return np.exp(-0.5 * np.sum(z * z, axis=1))


@dataclass(frozen=True, eq=False)
class _Pairs:
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    excl: np.ndarray


def _pairs(des: MrcDesign, h, block: int = 256) -> _Pairs:
    # i<j pairs with Y_i > Y_j and their kernel weights; row blocks bound memory
    n = des.y.size
    ii, jj, ww = [], [], []
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        i_idx, j_idx = np.nonzero((des.y[rows, None] > des.y[None, :])
                                  & (rows[:, None] < np.arange(n)[None, :]))
        i_idx = rows[i_idx]
        w = kernel_weights(des.local[i_idx], des.local[j_idx], h)
        ii.append(i_idx)
        jj.append(j_idx)
        ww.append(w)
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dtype=dt))
    return _Pairs(cat(ii, np.int64), cat(jj, np.int64), cat(ww, float), des.excl)


def _resolve_h(data: Dataset, cfg: MrcConfig, des: MrcDesign) -> np.ndarray:
    if cfg.bandwidths is None:
        return default_bandwidth(data, cfg)
    h = np.asarray(cfg.bandwidths, dtype=float)
    if h.size != des.local.shape[1]:
        raise MrcError(f"expected {des.local.shape[1]} bandwidths, got {h.size}")
    return h


def _q(pairs: _Pairs, b_full) -> float:
    idx = pairs.excl @ b_full
    return float(np.sum(pairs.w[idx[pairs.i] > idx[pairs.j]]))


def mrc_objective(b_free, data: Dataset, cfg: MrcConfig) -> float:
    """Localized rank objective at ``b = (1, b_free)``."""
    if data.n < 2:
        raise MrcError("need at least two observations")
    des = split_columns(data, cfg)
    b_free = np.atleast_1d(np.asarray(b_free, dtype=float))
    if b_free.size != des.excl.shape[1] - 1:
        raise MrcError(f"expected {des.excl.shape[1] - 1} free coefficients, got {b_free.size}")
    return _q(_pairs(des, _resolve_h(data, cfg, des)), np.r_[1.0, b_free])


@dataclass(eq=False)
class MrcResult:
    b_free: np.ndarray
    objective: float
    resolution: float
    bandwidths: np.ndarray
    exclusive: tuple
    localized: tuple
    trace: list = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        return np.r_[1.0, self.b_free]

    def to_dict(self) -> dict:
        return {
            "exclusive": list(self.exclusive),
            "beta": self.beta.tolist(),
            "objective": self.objective,
            "resolution": self.resolution,
            "bandwidths": self.bandwidths.tolist(),
            "localized": list(self.localized),
            "trace": self.trace,
        }


def fit_mrc(data: Dataset, cfg: MrcConfig) -> MrcResult:
    """Coarse-to-fine grid maximization of :func:`mrc_objective`.

    Each level searches a tensor grid of ``cfg.points`` values per free
    coordinate; the next level re-centres on the winner with a span of one
    grid step either side. Among tied maximizers the one nearest their mean
    is taken.
    """
    if data.n < 2:
        raise MrcError("need at least two observations")
    des = split_columns(data, cfg)
    h = _resolve_h(data, cfg, des)
    pairs = _pairs(des, h)
    k = des.excl.shape[1] - 1
    if pairs.w.size == 0 or not np.sum(pairs.w) > 0:
        raise FlatObjectiveError("all kernel weights vanish: bandwidth too small or no rank pairs")
    if k == 0:
        val = _q(pairs, np.ones(1))
        return MrcResult(np.zeros(0), val, 0.0, h, des.excl_names, des.local_names, [])
    lo = np.full(k, float(cfg.search_range[0]))
    hi = np.full(k, float(cfg.search_range[1]))
    trace = []
    best = None
    best_val = -np.inf
    step = 0.0
    for level in range(cfg.levels):
        axes = [np.linspace(lo[c], hi[c], cfg.points) for c in range(k)]
        step = float(axes[0][1] - axes[0][0])
        grid = np.array(list(itertools.product(*axes)))
        vals = np.array([_q(pairs, np.r_[1.0, g]) for g in grid])
        top = vals.max()
        if level == 0 and top <= 0:
            raise FlatObjectiveError("objective is identically zero over the search grid")
        winners = grid[vals == top]
        centre = winners.mean(axis=0)
        best = winners[np.argmin(np.sum((winners - centre) ** 2, axis=1))]
        best_val = float(top)
        trace.append({"level": level, "step": step, "b_free": best.tolist(), "objective": best_val})
        spans = np.array([a[1] - a[0] for a in axes])
        lo, hi = best - spans, best + spans
    return MrcResult(np.asarray(best, dtype=float), best_val, step, h, des.excl_names, des.local_names, trace)
