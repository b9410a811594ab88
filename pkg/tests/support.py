"""Shared synthetic fixtures for the test suite."""

import itertools

import numpy as np

from ordino.dgp import assign_responses
from ordino.gaussian import sample_bvn
from ordino.likelihood import Dataset, ModelParams
from ordino.structure import ThresholdStructure, random_coherent_structure


def mrc_dataset(n: int, seed: int, b: float = 0.7) -> Dataset:
    """Exclusive-covariate design with a known second coefficient.

    Dimension 1 orders ``x_a + b x_b + 0.5 w + e1`` into three categories;
    ``w`` is shared with dimension 2, whose own column ``z`` is exclusive.
    """
    rng = np.random.default_rng(seed)
    xa, xb, w, z = rng.normal(size=(4, n))
    e = rng.normal(size=(2, n))
    y1 = 1 + np.searchsorted([-0.8, 0.8], xa + b * xb + 0.5 * w + e[0])
    y2 = 1 + np.searchsorted([0.0], z - 0.5 * w + e[1])
    return Dataset(y1, y2, np.column_stack([xa, xb, w]), np.column_stack([w, z]),
                   names1=("xa", "xb", "w"), names2=("w", "z"))


def lattice_design(rho: float = 0.3):
    """Small 3x2 lattice with one uniform covariate per equation."""
    from ordino.dgp import CovariateLaw, DesignConfig
    from ordino.structure import ThresholdStructure

    return DesignConfig(
        name="lattice3x2",
        thresholds=ThresholdStructure.lattice([-1.0, 1.0], [0.5]),
        beta1=(1.0,),
        beta2=(-0.8,),
        rho=rho,
        draws={"u": CovariateLaw("uniform", {"a": -2.0, "b": 2.0}),
               "v": CovariateLaw("uniform", {"a": -2.0, "b": 2.0})},
        cols1=("u",),
        cols2=("v",),
    )


def random_params(rng, spec, k1=2, k2=2):
    ts = random_coherent_structure(spec, rng)
    return ModelParams(rng.normal(0, 1, k1), rng.normal(0, 1, k2), ts, rng.uniform(-0.9, 0.9))


def draw_data(params, rng, n):
    X1 = rng.normal(0, 1, (n, params.beta1.size))
    X2 = rng.normal(0, 1, (n, params.beta2.size))
    e1, e2 = sample_bvn(params.rho, rng, n)
    y1, y2 = assign_responses(params.thresholds, X1 @ params.beta1 + e1, X2 @ params.beta2 + e2)
    return Dataset(y1, y2, X1, X2)


def pinwheels(values=range(4)):
    """Every coherent 3x3 integer structure over ``values`` with no decision tree."""
    pairs = list(itertools.combinations(values, 2))
    out = []
    for c1 in itertools.product(pairs, repeat=3):
        i1 = np.array(c1, dtype=float).T
        d1 = np.diff(i1, axis=1)
        for c2 in itertools.product(pairs, repeat=3):
            i2 = np.array(c2, dtype=float)
            d2 = np.diff(i2, axis=0)
            if np.any(np.minimum(np.abs(d1), np.abs(d2)) > 0):
                continue
            ts = ThresholdStructure.from_interior(i1, i2)
            if not has_full_split_everywhere(ts):
                out.append(ts)
    return out


def has_full_split_everywhere(ts):
    # independent recursive oracle: try every full-spanning split, any order
    def ok(r1, s1, r2, s2):
        if r1 == s1 and r2 == s2:
            return True
        for c in range(r1, s1):
            col = ts.a1[c, r2 - 1:s2]
            if np.all(col == col[0]) and ok(r1, c, r2, s2) and ok(c + 1, s1, r2, s2):
                return True
        for c in range(r2, s2):
            row = ts.a2[r1 - 1:s1, c]
            if np.all(row == row[0]) and ok(r1, s1, r2, c) and ok(r1, s1, c + 1, s2):
                return True
        return False

    return ok(1, ts.M1, 1, ts.M2)
