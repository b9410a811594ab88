"""Bivariate ordered probit likelihood for general threshold structures.

Cell probabilities use inclusion-exclusion over the four corners of the
cell's own rectangle::

    P(j1, j2) = F(u1, u2) - F(l1, u2) - F(u1, l2) + F(l1, l2)

with ``u1 = A1[j1][j2] - x1 b1``, ``l1 = A1[j1-1][j2] - x1 b1``,
``u2 = A2[j1][j2] - x2 b2``, ``l2 = A2[j1][j2-1] - x2 b2`` and ``F`` the
bivariate normal CDF with correlation rho.

Scores follow from dF/da = phi(a) Phi((b - rho a)/s), dF/db symmetrically,
and dF/drho = phi_2(a, b; rho). For one observation with probability p,

    d log p / d u1 = (Fa(u1, u2) - Fa(u1, l2)) / p
    d log p / d l1 = (Fa(l1, l2) - Fa(l1, u2)) / p
    d log p / d u2 = (Fb(u1, u2) - Fb(l1, u2)) / p
    d log p / d l2 = (Fb(l1, l2) - Fb(u1, l2)) / p

and the index derivatives are minus the sums over upper and lower limits.
Threshold grids are addressed through a :class:`ThresholdLayout`, which maps
free threshold parameters onto grid entries (one per entry, one per lattice
row/column, or one per tie class).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gaussian import bvn_cdf, bvn_cdf_with_grad
from .structure import ResponseSpec, ThresholdStructure, corner_gaps

PROB_FLOOR = 1e-12


class DataError(ValueError):
    """Dataset is malformed or inconsistent with the model."""


@dataclass(frozen=True, eq=False)
class Dataset:
    y1: np.ndarray
    y2: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    names1: Optional[tuple] = None
    names2: Optional[tuple] = None

    def __post_init__(self):
        y1 = np.asarray(self.y1)
        y2 = np.asarray(self.y2)
        X1 = np.asarray(self.X1, dtype=float)
        X2 = np.asarray(self.X2, dtype=float)
        if X1.ndim == 1:
            X1 = X1[:, None]
        if X2.ndim == 1:
            X2 = X2[:, None]
        if y1.ndim != 1 or y2.shape != y1.shape or X1.shape[0] != y1.size or X2.shape[0] != y1.size:
            raise DataError("responses and covariate rows must have consistent lengths")
        if not (np.issubdtype(y1.dtype, np.integer) or np.all(y1 == np.round(y1))):
            raise DataError("y1 must hold integer categories")
        if not (np.issubdtype(y2.dtype, np.integer) or np.all(y2 == np.round(y2))):
            raise DataError("y2 must hold integer categories")
        if np.any(~np.isfinite(X1)) or np.any(~np.isfinite(X2)):
            raise DataError("covariates contain missing or non-finite values")
        if y1.size and (y1.min() < 1 or y2.min() < 1):
            raise DataError("categories are 1-based")
        for name, arr in (("y1", y1.astype(np.int64)), ("y2", y2.astype(np.int64)), ("X1", X1), ("X2", X2)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n1 = tuple(self.names1) if self.names1 else tuple(f"x1_{i + 1}" for i in range(X1.shape[1]))
        n2 = tuple(self.names2) if self.names2 else tuple(f"x2_{i + 1}" for i in range(X2.shape[1]))
        if len(n1) != X1.shape[1] or len(n2) != X2.shape[1]:
            raise DataError("column names do not match covariate widths")
        object.__setattr__(self, "names1", n1)
        object.__setattr__(self, "names2", n2)

    @property
    def n(self) -> int:
        return int(self.y1.size)

    @property
    def k1(self) -> int:
        return self.X1.shape[1]

    @property
    def k2(self) -> int:
        return self.X2.shape[1]

    def check_spec(self, spec: ResponseSpec) -> None:
        if self.n and (self.y1.max() > spec.M1 or self.y2.max() > spec.M2):
            raise DataError(f"responses exceed the declared categories {spec.M1} x {spec.M2}")

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.y1[idx], self.y2[idx], self.X1[idx], self.X2[idx], self.names1, self.names2)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (np.array_equal(self.y1, other.y1) and np.array_equal(self.y2, other.y2)
                and np.array_equal(self.X1, other.X1) and np.array_equal(self.X2, other.X2)
                and self.names1 == other.names1 and self.names2 == other.names2)


@dataclass(frozen=True, eq=False)
class ModelParams:
    beta1: np.ndarray
    beta2: np.ndarray
    thresholds: ThresholdStructure
    rho: float

    def __post_init__(self):
        b1 = np.array(self.beta1, dtype=float).ravel()
        b2 = np.array(self.beta2, dtype=float).ravel()
        b1.setflags(write=False)
        b2.setflags(write=False)
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)
        if not abs(float(self.rho)) < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def spec(self) -> ResponseSpec:
        return self.thresholds.spec

    def to_dict(self) -> dict:
        return {
            "beta1": [float(v) for v in self.beta1],
            "beta2": [float(v) for v in self.beta2],
            "rho": self.rho,
            "thresholds": self.thresholds.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        return cls(doc["beta1"], doc["beta2"], ThresholdStructure.from_dict(doc["thresholds"]), doc["rho"])


# layouts ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ThresholdLayout:
    """Map from free threshold parameters to interior grid entries.

    ``idx1[j1-1, j2-1]`` is the parameter index of ``A1[j1][j2]`` and
    ``idx2[j1-1, j2-1]`` that of ``A2[j1][j2]``.
    """

    spec: ResponseSpec
    idx1: np.ndarray
    idx2: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        n = self.n_alpha
        used = np.union1d(self.idx1.ravel(), self.idx2.ravel())
        if not np.array_equal(used, np.arange(n)):
            raise ValueError("layout must use every parameter index 0..n-1")
        if not self.names:
            object.__setattr__(self, "names", tuple(_class_name(self.members(i)) for i in range(n)))

    @property
    def n_alpha(self) -> int:
        sizes = [a.max() + 1 for a in (self.idx1, self.idx2) if a.size]
        return int(max(sizes)) if sizes else 0

    def members(self, i: int) -> list:
        out = [(1, int(a) + 1, int(b) + 1) for a, b in np.argwhere(self.idx1 == i)]
        out += [(2, int(a) + 1, int(b) + 1) for a, b in np.argwhere(self.idx2 == i)]
        return sorted(out)

    @classmethod
    def nonlattice(cls, spec: ResponseSpec) -> "ThresholdLayout":
        n1 = (spec.M1 - 1) * spec.M2
        idx1 = np.arange(n1).reshape(spec.M1 - 1, spec.M2)
        idx2 = n1 + np.arange(spec.M1 * (spec.M2 - 1)).reshape(spec.M1, spec.M2 - 1)
        return cls(spec, idx1, idx2)

    @classmethod
    def lattice(cls, spec: ResponseSpec) -> "ThresholdLayout":
        idx1 = np.repeat(np.arange(spec.M1 - 1)[:, None], spec.M2, axis=1)
        idx2 = (spec.M1 - 1) + np.repeat(np.arange(spec.M2 - 1)[None, :], spec.M1, axis=0)
        return cls(spec, idx1, idx2)

    @classmethod
    def from_classes(cls, spec: ResponseSpec, classes: Sequence[Sequence[tuple]]) -> "ThresholdLayout":
        idx1 = np.full((spec.M1 - 1, spec.M2), -1, dtype=int)
        idx2 = np.full((spec.M1, spec.M2 - 1), -1, dtype=int)
        for i, cls_ in enumerate(sorted(tuple(sorted(c)) for c in classes)):
            for g, j1, j2 in cls_:
                target = idx1 if g == 1 else idx2
                if target[j1 - 1, j2 - 1] != -1:
                    raise ValueError(f"entry {(g, j1, j2)} appears in two classes")
                target[j1 - 1, j2 - 1] = i
        if np.any(idx1 < 0) or np.any(idx2 < 0):
            raise ValueError("classes do not cover every interior entry")
        return cls(spec, idx1, idx2)

    def classes(self) -> list:
        return [tuple(self.members(i)) for i in range(self.n_alpha)]

    def structure(self, alpha) -> ThresholdStructure:
        alpha = np.asarray(alpha, dtype=float)
        return ThresholdStructure.from_interior(alpha[self.idx1], alpha[self.idx2])

    def grids(self, alpha):
        """Full padded grids without validation (hot path)."""
        alpha = np.asarray(alpha, dtype=float)
        M1, M2 = self.spec.M1, self.spec.M2
        a1 = np.empty((M1 + 1, M2))
        a1[0] = -np.inf
        a1[M1] = np.inf
        a1[1:M1] = alpha[self.idx1]
        a2 = np.empty((M1, M2 + 1))
        a2[:, 0] = -np.inf
        a2[:, M2] = np.inf
        a2[:, 1:M2] = alpha[self.idx2]
        return a1, a2

    def pack(self, ts: ThresholdStructure) -> np.ndarray:
        """Class means of the entries of ``ts``."""
        n = self.n_alpha
        # bincount of empty weights is integer-typed, hence the explicit float start
        tot = np.zeros(n)
        tot += np.bincount(self.idx1.ravel(), ts.interior1.ravel(), minlength=n)
        tot += np.bincount(self.idx2.ravel(), ts.interior2.ravel(), minlength=n)
        cnt = np.bincount(self.idx1.ravel(), minlength=n) + np.bincount(self.idx2.ravel(), minlength=n)
        return tot / cnt

    def monotone(self, alpha) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        i1 = alpha[self.idx1]
        i2 = alpha[self.idx2]
        return bool(np.all(np.diff(i1, axis=0) > 0) and np.all(np.diff(i2, axis=1) > 0))

    def reduce_grid_gradient(self, g1, g2) -> np.ndarray:
        n = self.n_alpha
        return (np.bincount(self.idx1.ravel(), g1.ravel(), minlength=n)
                + np.bincount(self.idx2.ravel(), g2.ravel(), minlength=n))


def _class_name(members) -> str:
    return "~".join(f"A{g}[{j1},{j2}]" for g, j1, j2 in members)


# core evaluation ---------------------------------------------------------------


def _index(X, beta):
    # explicit column sum: no BLAS reduction, bit-stable across thread counts
    out = np.zeros(X.shape[0])
    for c in range(X.shape[1]):
        out += X[:, c] * beta[c]
    return out


@dataclass
class _Eval:
    p: np.ndarray
    logp: np.ndarray
    g_u1: Optional[np.ndarray] = None
    g_l1: Optional[np.ndarray] = None
    g_u2: Optional[np.ndarray] = None
    g_l2: Optional[np.ndarray] = None
    g_rho: Optional[np.ndarray] = None


def _corner_limits(a1, a2, y1, y2, eta1, eta2):
    j1 = y1
    j2 = y2 - 1  # column into a1 storage
    u1 = a1[j1, j2] - eta1
    l1 = a1[j1 - 1, j2] - eta1
    u2 = a2[y1 - 1, y2] - eta2
    l2 = a2[y1 - 1, y2 - 1] - eta2
    return u1, l1, u2, l2


def _evaluate(a1, a2, rho, data: Dataset, beta1, beta2, grad: bool) -> _Eval:
    eta1 = _index(data.X1, beta1)
    eta2 = _index(data.X2, beta2)
    u1, l1, u2, l2 = _corner_limits(a1, a2, data.y1, data.y2, eta1, eta2)
    n = u1.size
    A = np.concatenate([u1, l1, u1, l1])
    B = np.concatenate([u2, u2, l2, l2])
    if not grad:
        F = bvn_cdf(A, B, rho)
        p = F[:n] - F[n:2 * n] - F[2 * n:3 * n] + F[3 * n:]
        pc = np.maximum(p, PROB_FLOOR)
        return _Eval(p, np.log(pc))
    F, Fa, Fb, Fr = bvn_cdf_with_grad(A, B, rho)
    s = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n), slice(3 * n, 4 * n)
    p = F[s[0]] - F[s[1]] - F[s[2]] + F[s[3]]
    live = p > PROB_FLOOR
    pc = np.where(live, p, PROB_FLOOR)
    inv = np.where(live, 1.0 / pc, 0.0)
    return _Eval(
        p,
        np.log(pc),
        g_u1=(Fa[s[0]] - Fa[s[2]]) * inv,
        g_l1=(Fa[s[3]] - Fa[s[1]]) * inv,
        g_u2=(Fb[s[0]] - Fb[s[1]]) * inv,
        g_l2=(Fb[s[3]] - Fb[s[2]]) * inv,
        g_rho=(Fr[s[0]] - Fr[s[1]] - Fr[s[2]] + Fr[s[3]]) * inv,
    )


class LikelihoodModel:
    """Log-likelihood, scores and penalty over ``theta = (beta1, beta2, alpha, rho)``.

    ``alpha`` is laid out by ``layout``. Index arrays that route per-observation
    threshold derivatives to parameters are precomputed once per dataset.
    """

    def __init__(self, data: Dataset, layout: ThresholdLayout):
        data.check_spec(layout.spec)
        self.data = data
        self.layout = layout
        self.spec = layout.spec
        self.k1 = data.k1
        self.k2 = data.k2
        self.n_alpha = layout.n_alpha
        self.n_params = self.k1 + self.k2 + self.n_alpha + 1
        M1, M2 = self.spec.M1, self.spec.M2
        # parameter column (or -1 for an infinite boundary) of each corner entry
        full1 = np.full((M1 + 1, M2), -1, dtype=int)
        full1[1:M1] = layout.idx1
        full2 = np.full((M1, M2 + 1), -1, dtype=int)
        full2[:, 1:M2] = layout.idx2
        y1, y2 = data.y1, data.y2
        self._col_u1 = full1[y1, y2 - 1]
        self._col_l1 = full1[y1 - 1, y2 - 1]
        self._col_u2 = full2[y1 - 1, y2]
        self._col_l2 = full2[y1 - 1, y2 - 1]
        self._D1, self._D2 = _gap_operators(layout)

    # parameter vector helpers
    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        k1, k2, na = self.k1, self.k2, self.n_alpha
        return theta[:k1], theta[k1:k1 + k2], theta[k1 + k2:k1 + k2 + na], float(theta[-1])

    def join(self, beta1, beta2, alpha, rho) -> np.ndarray:
        return np.concatenate([np.ravel(beta1), np.ravel(beta2), np.ravel(alpha), [rho]]).astype(float)

    def theta_of(self, params: ModelParams) -> np.ndarray:
        return self.join(params.beta1, params.beta2, self.layout.pack(params.thresholds), params.rho)

    def params_of(self, theta) -> ModelParams:
        b1, b2, alpha, rho = self.split(theta)
        return ModelParams(b1, b2, self.layout.structure(alpha), rho)

    def names(self) -> list:
        return ([f"beta1[{n}]" for n in self.data.names1] + [f"beta2[{n}]" for n in self.data.names2]
                + list(self.layout.names) + ["rho"])

    # evaluation
    def _eval(self, theta, grad):
        b1, b2, alpha, rho = self.split(theta)
        a1, a2 = self.layout.grids(alpha)
        return _evaluate(a1, a2, rho, self.data, b1, b2, grad)

    def loglik_obs(self, theta) -> np.ndarray:
        return self._eval(theta, False).logp

    def loglik(self, theta) -> float:
        if self.data.n == 0:
            raise DataError("empty dataset")
        return float(np.mean(self._eval(theta, False).logp))

    def _alpha_scores(self, ev: _Eval) -> np.ndarray:
        n = self.data.n
        S = np.zeros((n, self.n_alpha + 1))
        rows = np.arange(n)
        for col, g in ((self._col_u1, ev.g_u1), (self._col_l1, ev.g_l1),
                       (self._col_u2, ev.g_u2), (self._col_l2, ev.g_l2)):
            # -1 columns land in the trailing dummy slot
            np.add.at(S, (rows, np.where(col < 0, self.n_alpha, col)), g)
        return S[:, :self.n_alpha]

    def score_obs(self, theta) -> np.ndarray:
        """Per-observation gradient of ``log p_i``, shape ``(n, n_params)``."""
        ev = self._eval(theta, True)
        d_eta1 = -(ev.g_u1 + ev.g_l1)
        d_eta2 = -(ev.g_u2 + ev.g_l2)
        return np.hstack([
            self.data.X1 * d_eta1[:, None],
            self.data.X2 * d_eta2[:, None],
            self._alpha_scores(ev),
            ev.g_rho[:, None],
        ])

    def loglik_and_score(self, theta):
        """Mean log-likelihood and its gradient."""
        if self.data.n == 0:
            raise DataError("empty dataset")
        ev = self._eval(theta, True)
        n = self.data.n
        d_eta1 = -(ev.g_u1 + ev.g_l1)
        d_eta2 = -(ev.g_u2 + ev.g_l2)
        g_b1 = np.array([np.sum(self.data.X1[:, c] * d_eta1) for c in range(self.k1)])
        g_b2 = np.array([np.sum(self.data.X2[:, c] * d_eta2) for c in range(self.k2)])
        na = self.n_alpha
        g_alpha = np.zeros(na)
        for col, g in ((self._col_u1, ev.g_u1), (self._col_l1, ev.g_l1),
                       (self._col_u2, ev.g_u2), (self._col_l2, ev.g_l2)):
            g_alpha += np.bincount(np.where(col < 0, na, col), g, minlength=na + 1)[:na]
        grad = np.concatenate([g_b1, g_b2, g_alpha, [np.sum(ev.g_rho)]]) / n
        return float(np.mean(ev.logp)), grad

    def score(self, theta) -> np.ndarray:
        return self.loglik_and_score(theta)[1]

    # penalty / constraints on the threshold part
    def penalty_and_grad(self, theta, lam: float):
        _, _, alpha, _ = self.split(theta)
        val, g_alpha = coherency_penalty_alpha(self.layout, alpha, lam)
        grad = np.zeros(self.n_params)
        grad[self.k1 + self.k2:self.k1 + self.k2 + self.n_alpha] = g_alpha
        return val, grad

    def penalty_hessian(self, theta, lam: float) -> np.ndarray:
        """Exact Hessian of the penalty over ``theta`` (nonzero on the alpha block only)."""
        H = np.zeros((self.n_params, self.n_params))
        if lam == 0 or self._D1.shape[0] == 0:
            return H
        _, _, alpha, _ = self.split(theta)
        d1 = self._D1 @ alpha
        d2 = self._D2 @ alpha
        D1 = self._D1
        D2 = self._D2
        block = (D1.T * (2.0 * d2 * d2)) @ D1 + (D2.T * (2.0 * d1 * d1)) @ D2
        cross = (D1.T * (4.0 * d1 * d2)) @ D2
        off = self.k1 + self.k2
        H[off:off + self.n_alpha, off:off + self.n_alpha] = -lam * (block + cross + cross.T)
        return H

    def constraints(self, theta) -> np.ndarray:
        _, _, alpha, _ = self.split(theta)
        d1, d2 = _gaps(self.layout, alpha)
        return (d1 * d1 * d2 * d2).ravel()

    def constraint_jacobian(self, theta) -> np.ndarray:
        _, _, alpha, _ = self.split(theta)
        rows = _constraint_grid_jacobian(self.layout, alpha)
        R = np.zeros((len(rows), self.n_params))
        off = self.k1 + self.k2
        for r, (g1, g2) in enumerate(rows):
            R[r, off:off + self.n_alpha] = self.layout.reduce_grid_gradient(g1, g2)
        return R


def _gaps(layout: ThresholdLayout, alpha):
    i1 = np.asarray(alpha)[layout.idx1]
    i2 = np.asarray(alpha)[layout.idx2]
    return np.diff(i1, axis=1), np.diff(i2, axis=0)


def _gap_operators(layout: ThresholdLayout):
    # linear maps alpha -> corner gaps (d1, d2), corners row-major
    M1, M2 = layout.spec.M1, layout.spec.M2
    n_c = (M1 - 1) * (M2 - 1)
    D1 = np.zeros((n_c, layout.n_alpha))
    D2 = np.zeros((n_c, layout.n_alpha))
    for a in range(M1 - 1):
        for b in range(M2 - 1):
            r = a * (M2 - 1) + b
            D1[r, layout.idx1[a, b + 1]] += 1.0
            D1[r, layout.idx1[a, b]] -= 1.0
            D2[r, layout.idx2[a + 1, b]] += 1.0
            D2[r, layout.idx2[a, b]] -= 1.0
    return D1, D2


def coherency_penalty_alpha(layout: ThresholdLayout, alpha, lam: float):
    """Penalty ``-lam * sum d1^2 d2^2`` over interior corners and its gradient in alpha."""
    d1, d2 = _gaps(layout, alpha)
    if d1.size == 0 or lam == 0:
        return 0.0, np.zeros(layout.n_alpha)
    val = -lam * float(np.sum(d1 * d1 * d2 * d2))
    # dP/dd1 and dP/dd2 per corner
    p1 = -lam * 2.0 * d1 * d2 * d2
    p2 = -lam * 2.0 * d2 * d1 * d1
    M1, M2 = layout.spec.M1, layout.spec.M2
    g1 = np.zeros((M1 - 1, M2))
    g1[:, 1:] += p1
    g1[:, :-1] -= p1
    g2 = np.zeros((M1, M2 - 1))
    g2[1:, :] += p2
    g2[:-1, :] -= p2
    return val, layout.reduce_grid_gradient(g1, g2)


def _constraint_grid_jacobian(layout: ThresholdLayout, alpha):
    d1, d2 = _gaps(layout, alpha)
    M1, M2 = layout.spec.M1, layout.spec.M2
    rows = []
    for a in range(M1 - 1):
        for b in range(M2 - 1):
            g1 = np.zeros((M1 - 1, M2))
            g2 = np.zeros((M1, M2 - 1))
            dr1 = 2.0 * d1[a, b] * d2[a, b] ** 2
            dr2 = 2.0 * d2[a, b] * d1[a, b] ** 2
            g1[a, b + 1] += dr1
            g1[a, b] -= dr1
            g2[a + 1, b] += dr2
            g2[a, b] -= dr2
            rows.append((g1, g2))
    return rows


# public functional API -----------------------------------------------------------


def cell_prob(params: ModelParams, x1, x2, j1: int, j2: int) -> float:
    """Probability of cell ``(j1, j2)`` at covariate rows ``x1``, ``x2``."""
    ts = params.thresholds
    if not (1 <= j1 <= ts.M1 and 1 <= j2 <= ts.M2):
        raise IndexError(f"cell ({j1}, {j2}) out of range")
    return float(cell_prob_matrix(params, x1, x2)[j1 - 1, j2 - 1])


def cell_prob_matrix(params: ModelParams, x1, x2) -> np.ndarray:
    """``M1 x M2`` grid of cell probabilities at one covariate point."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.size != params.beta1.size or x2.size != params.beta2.size:
        raise ValueError("covariate row length does not match coefficient length")
    eta1 = float(np.sum(x1 * params.beta1))
    eta2 = float(np.sum(x2 * params.beta2))
    ts = params.thresholds
    M1, M2 = ts.M1, ts.M2
    j1 = np.repeat(np.arange(1, M1 + 1), M2)
    j2 = np.tile(np.arange(1, M2 + 1), M1)
    u1, l1, u2, l2 = _corner_limits(ts.a1, ts.a2, j1, j2, eta1, eta2)
    F = bvn_cdf(np.concatenate([u1, l1, u1, l1]), np.concatenate([u2, u2, l2, l2]), params.rho)
    m = j1.size
    p = F[:m] - F[m:2 * m] - F[2 * m:3 * m] + F[3 * m:]
    return p.reshape(M1, M2)


def _model_for(params: ModelParams, data: Dataset) -> LikelihoodModel:
    if data.k1 != params.beta1.size or data.k2 != params.beta2.size:
        raise DataError("covariate widths do not match coefficient lengths")
    return LikelihoodModel(data, ThresholdLayout.nonlattice(params.spec))


def loglik(params: ModelParams, data: Dataset) -> float:
    """Mean log-likelihood ``(1/N) sum_i log p_i`` with the probability floor applied."""
    if data.n == 0:
        raise DataError("empty dataset")
    model = _model_for(params, data)
    return model.loglik(model.theta_of(params))


def score(params: ModelParams, data: Dataset) -> np.ndarray:
    """Gradient of :func:`loglik` over ``(beta1, beta2, A1 interior, A2 interior, rho)``.

    Interior entries are ordered row-major: ``A1[1][1], A1[1][2], ...`` then
    ``A2[1][1], A2[1][2], ...``.
    """
    if data.n == 0:
        raise DataError("empty dataset")
    model = _model_for(params, data)
    return model.score(model.theta_of(params))


def penalty(params: ModelParams, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    d1, d2 = corner_gaps(params.thresholds)
    return -lam * float(np.sum(d1 * d1 * d2 * d2)) if lam else 0.0


def constraint_vector(params: ModelParams) -> np.ndarray:
    """One product constraint ``d1^2 d2^2`` per interior corner (row-major)."""
    d1, d2 = corner_gaps(params.thresholds)
    return (d1 * d1 * d2 * d2).ravel()


def constraint_jacobian(params: ModelParams) -> np.ndarray:
    """Jacobian of :func:`constraint_vector` over the :func:`score` coordinates."""
    k1, k2 = params.beta1.size, params.beta2.size
    layout = ThresholdLayout.nonlattice(params.spec)
    alpha = layout.pack(params.thresholds)
    rows = _constraint_grid_jacobian(layout, alpha)
    R = np.zeros((len(rows), k1 + k2 + layout.n_alpha + 1))
    for r, (g1, g2) in enumerate(rows):
        R[r, k1 + k2:k1 + k2 + layout.n_alpha] = layout.reduce_grid_gradient(g1, g2)
    return R
