"""Data-generating processes for the Monte Carlo designs.

Latent processes are ``Y*_d = x_d b_d + e_d`` with ``(e1, e2)`` standard
bivariate normal with correlation rho; responses come from locating
``(Y*_1, Y*_2)`` among the cells of a threshold structure.
"""

from __future__ import annotations

import math
import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gaussian import sample_bvn
from .likelihood import Dataset
from .seeding import STREAM_SIMULATE, generator
from .structure import (
    IncoherentStructureError,
    ResponseSpec,
    ThresholdStructure,
    is_coherent,
)

BLOCK_SIZE = 4096


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CovariateLaw:
    """One covariate distribution.

    ``kind`` is one of ``uniform`` (params ``a``, ``b``), ``discrete``
    (``points``, ``probs``), ``student_t`` (``df``) or ``logistic``
    (``loc``, ``scale``).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind == "uniform":
            if not p["b"] > p["a"]:
                raise ConfigError("uniform law needs a < b")
        elif self.kind == "discrete":
            pts = np.asarray(p["points"], dtype=float)
            pr = np.asarray(p["probs"], dtype=float)
            if pts.shape != pr.shape or np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
                raise ConfigError("discrete law needs matching points and probabilities summing to 1")
        elif self.kind == "student_t":
            if not p["df"] > 0:
                raise ConfigError("student_t needs df > 0")
        elif self.kind == "logistic":
            if not p["scale"] > 0:
                raise ConfigError("logistic needs scale > 0")
        else:
            raise ConfigError(f"unknown covariate law {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "uniform":
            return rng.uniform(p["a"], p["b"], n)
        if self.kind == "discrete":
            pts = np.asarray(p["points"], dtype=float)
            cum = np.cumsum(p["probs"])
            cum[-1] = 1.0
            return pts[np.searchsorted(cum, rng.random(n), side="right")]
        if self.kind == "student_t":
            df = float(p["df"])
            z = rng.standard_normal(n)
            return z / np.sqrt(rng.chisquare(df, n) / df)
        # logistic by inverse CDF on the open unit interval
        u = (rng.integers(0, 1 << 53, n).astype(float) + 0.5) / float(1 << 53)
        return p["loc"] + p["scale"] * np.log(u / (1.0 - u))

    def mean(self) -> float:
        p = self.params
        if self.kind == "uniform":
            return 0.5 * (p["a"] + p["b"])
        if self.kind == "discrete":
            return float(np.dot(p["points"], p["probs"]))
        if self.kind == "student_t":
            return 0.0
        return float(p["loc"])

    def variance(self) -> float:
        p = self.params
        if self.kind == "uniform":
            return (p["b"] - p["a"]) ** 2 / 12.0
        if self.kind == "discrete":
            pts = np.asarray(p["points"], dtype=float)
            pr = np.asarray(p["probs"], dtype=float)
            m = float(pts @ pr)
            return float(((pts - m) ** 2) @ pr)
        if self.kind == "student_t":
            df = p["df"]
            return df / (df - 2.0) if df > 2 else math.inf
        return (math.pi * p["scale"]) ** 2 / 3.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True, eq=False)
class DesignConfig:
    """Full data-generating specification.

    ``draws`` names each independent covariate draw and its law; ``cols1`` and
    ``cols2`` list which draws form the columns of ``X1`` and ``X2`` (a name
    in both is a shared regressor).
    """

    name: str
    thresholds: ThresholdStructure
    beta1: tuple
    beta2: tuple
    rho: float
    draws: dict
    cols1: tuple
    cols2: tuple

    def __post_init__(self):
        report = is_coherent(self.thresholds)
        if not report.coherent:
            raise IncoherentStructureError(report.violations)
        if len(self.beta1) != len(self.cols1) or len(self.beta2) != len(self.cols2):
            raise ConfigError("coefficient lengths must match column declarations")
        missing = (set(self.cols1) | set(self.cols2)) - set(self.draws)
        if missing:
            raise ConfigError(f"columns reference undeclared draws {sorted(missing)}")
        if not abs(self.rho) < 1:
            raise ConfigError("rho must lie in (-1, 1)")

    @property
    def spec(self) -> ResponseSpec:
        return self.thresholds.spec

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "M": [self.spec.M1, self.spec.M2],
            "beta1": list(self.beta1),
            "beta2": list(self.beta2),
            "rho": self.rho,
            "draws": {k: v.to_dict() for k, v in self.draws.items()},
            "cols1": list(self.cols1),
            "cols2": list(self.cols2),
            "thresholds": self.thresholds.to_dict(),
        }

    def truth_params(self):
        from .likelihood import ModelParams

        return ModelParams(self.beta1, self.beta2, self.thresholds, self.rho)


# canned designs -------------------------------------------------------------------
#
# Index mapping to the alpha notation, whose "other dimension" subscript is
# 0-based: A1[j1][j2] is alpha^(1)_{j1, j2-1} and A2[j1][j2] is alpha^(2)_{j1-1, j2}.


def _design1(beta2: float, name: str, swapped: bool = False) -> DesignConfig:
    if swapped:
        # dimension 1 carries the straight boundary, dimension 2 the broken one
        ts = ThresholdStructure.from_interior([[1.0, 1.0]], [[-2.0], [1.5]])
    else:
        ts = ThresholdStructure.from_interior([[-2.0, 1.5]], [[1.0], [1.0]])
    return DesignConfig(
        name=name,
        thresholds=ts,
        beta1=(1.0,),
        beta2=(beta2,),
        rho=0.33,
        draws={"x": CovariateLaw("uniform", {"a": -5.0, "b": 5.0})},
        cols1=("x",),
        cols2=("x",),
    )


def _design2() -> DesignConfig:
    ts = ThresholdStructure.from_interior(
        [[-3.25, -3.25, -0.5],
         [0.5, 1.0, 5.0],
         [8.0, 8.0, 8.0]],
        [[-4.0, 0.5],
         [-2.0, 0.5],
         [-2.0, 0.5],
         [0.0, 4.0]],
    )
    return DesignConfig(
        name="design2",
        thresholds=ts,
        beta1=(1.5, -4.0),
        beta2=(3.0,),
        rho=0.5,
        draws={
            "x": CovariateLaw("uniform", {"a": -3.0, "b": 3.0}),
            "w1": CovariateLaw("discrete", {"points": [-2.5, -1.5, -0.5, 0.5], "probs": [0.25] * 4}),
        },
        cols1=("x", "w1"),
        cols2=("x",),
    )


def _design3() -> DesignConfig:
    ts = ThresholdStructure.from_interior(
        [[-8.0, -8.0],
         [-5.0, 0.0],
         [0.5, 0.5],
         [2.0, 2.0],
         [3.0, 3.0],
         [3.5, 8.0]],
        [[-4.0], [-2.0], [-2.0], [1.0], [3.0], [7.0], [7.0]],
    )
    return DesignConfig(
        name="design3",
        thresholds=ts,
        beta1=(1.5, -4.0),
        beta2=(3.0, -6.0, 1.0),
        rho=0.5,
        draws={
            "x": CovariateLaw("uniform", {"a": -2.0, "b": 2.0}),
            "w1": CovariateLaw("student_t", {"df": 5.0}),
            "w2": CovariateLaw("student_t", {"df": 5.0}),
            "z2": CovariateLaw("logistic", {"loc": 2.0, "scale": 1.0}),
        },
        cols1=("x", "w1"),
        cols2=("x", "w2", "z2"),
    )


DESIGNS = {
    "design1_table": lambda: _design1(0.5, "design1_table"),
    "design1_text": lambda: _design1(1.0, "design1_text"),
    "design1_swapped": lambda: _design1(0.5, "design1_swapped", swapped=True),
    "design2": _design2,
    "design3": _design3,
}


def design(design_id) -> DesignConfig:
    """Canned Monte Carlo design: ``1`` (table variant), ``2``, ``3`` or a variant name."""
    key = {1: "design1_table", 2: "design2", 3: "design3"}.get(design_id, design_id)
    if isinstance(key, str) and key.isdigit():
        key = {"1": "design1_table", "2": "design2", "3": "design3"}.get(key, key)
    try:
        return DESIGNS[key]()
    except (KeyError, TypeError):
        raise ConfigError(f"unknown design {design_id!r}; choose from 1, 2, 3 or {sorted(DESIGNS)}") from None


# classification ---------------------------------------------------------------------


class AssignmentError(RuntimeError):
    pass


def assign_responses(ts: ThresholdStructure, ystar1, ystar2):
    """Vectorised cell lookup; returns integer arrays ``(j1, j2)``.

    Membership is tested jointly on both grids because cells of a
    non-lattice structure are not separable by dimension. Cells are
    half-open ``(lo, hi]`` in both coordinates.
    """
    y1 = np.asarray(ystar1, dtype=float)
    y2 = np.asarray(ystar2, dtype=float)
    j1 = np.zeros(y1.shape, dtype=np.int64)
    j2 = np.zeros(y1.shape, dtype=np.int64)
    hits = np.zeros(y1.shape, dtype=np.int64)
    for a in range(1, ts.M1 + 1):
        lo2_col = ts.a2[a - 1]
        for b in range(1, ts.M2 + 1):
            inside = ((y1 > ts.a1[a - 1, b - 1]) & (y1 <= ts.a1[a, b - 1])
                      & (y2 > lo2_col[b - 1]) & (y2 <= lo2_col[b]))
            j1[inside] = a
            j2[inside] = b
            hits += inside
    if np.any(hits != 1):
        bad = int(np.argmax(hits != 1))
        raise AssignmentError(
            f"point ({y1.ravel()[bad]}, {y2.ravel()[bad]}) lies in {int(hits.ravel()[bad])} cells; "
            "the structure does not tile the plane"
        )
    return j1, j2


def assign_response(ts: ThresholdStructure, ystar1: float, ystar2: float) -> tuple[int, int]:
    j1, j2 = assign_responses(ts, [ystar1], [ystar2])
    return int(j1[0]), int(j2[0])


# simulation -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Simulation:
    data: Dataset
    eps1: np.ndarray
    eps2: np.ndarray


def _draw_block(config: DesignConfig, rng, n: int):
    values = {name: config.draws[name].sample(rng, n) for name in sorted(config.draws)}
    e1, e2 = sample_bvn(config.rho, rng, size=n)
    X1 = np.column_stack([values[c] for c in config.cols1]) if config.cols1 else np.zeros((n, 0))
    X2 = np.column_stack([values[c] for c in config.cols2]) if config.cols2 else np.zeros((n, 0))
    return X1, X2, e1, e2


def simulate_full(config: DesignConfig, n: int, seed: int) -> Simulation:
    """Simulate ``n`` observations and keep the latent errors."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    parts = []
    for block, start in enumerate(range(0, n, BLOCK_SIZE)):
        size = min(BLOCK_SIZE, n - start)
        parts.append(_draw_block(config, generator(seed, block, STREAM_SIMULATE), size))
    X1 = np.vstack([p[0] for p in parts])
    X2 = np.vstack([p[1] for p in parts])
    e1 = np.concatenate([p[2] for p in parts])
    e2 = np.concatenate([p[3] for p in parts])
    ystar1 = _latent(X1, config.beta1) + e1
    ystar2 = _latent(X2, config.beta2) + e2
    y1, y2 = assign_responses(config.thresholds, ystar1, ystar2)
    # positional column names match the CSV header; config.cols1/cols2 map them back
    data = Dataset(y1, y2, X1, X2)
    return Simulation(data, e1, e2)


def simulate(config: DesignConfig, n: int, seed: int) -> Dataset:
    return simulate_full(config, n, seed).data


def _latent(X, beta: Sequence[float]) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for c, b in enumerate(beta):
        out += X[:, c] * b
    return out


# CSV I/O --------------------------------------------------------------------------------


def dataset_to_csv(data: Dataset) -> str:
    """Header ``y1,y2,<X1 names>,<X2 names>``; covariates at 17 significant digits.

    Names lacking their equation prefix are written as ``x1_<name>`` or
    ``x2_<name>`` so that :func:`dataset_from_csv` can route them back.
    """
    buf = io.StringIO()
    head1 = [n if n.startswith("x1_") else f"x1_{n}" for n in data.names1]
    head2 = [n if n.startswith("x2_") else f"x2_{n}" for n in data.names2]
    buf.write(",".join(["y1", "y2", *head1, *head2]) + "\n")
    X = np.hstack([data.X1, data.X2])
    for i in range(data.n):
        vals = [str(int(data.y1[i])), str(int(data.y2[i]))] + [f"{v:.17g}" for v in X[i]]
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dataset_to_csv(data))


def dataset_from_csv(text: str) -> Dataset:
    """Parse the CSV layout written by :func:`dataset_to_csv`.

    Columns named ``x1_*`` go to ``X1`` and ``x2_*`` to ``X2``, in file order.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["y1", "y2"]:
        raise ConfigError("CSV must start with columns y1,y2")
    header = [h.strip() for h in rows[0]]
    c1 = [i for i, h in enumerate(header) if h.startswith("x1_")]
    c2 = [i for i, h in enumerate(header) if h.startswith("x2_")]
    if len(c1) + len(c2) + 2 != len(header):
        raise ConfigError("covariate columns must be prefixed x1_ or x2_")
    body = [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise ConfigError("ragged CSV rows")
    try:
        arr = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ConfigError(f"non-numeric CSV entry: {exc}") from None
    if np.any(arr[:, :2] != np.round(arr[:, :2])):
        raise ConfigError("responses must be integers")
    return Dataset(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, c1], arr[:, c2],
                   names1=tuple(header[i] for i in c1), names2=tuple(header[i] for i in c2))


def read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        return dataset_from_csv(fh.read())
