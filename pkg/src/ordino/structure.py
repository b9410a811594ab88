"""Bivariate threshold structures: cells, coherency, hierarchy and ties.

Index conventions
-----------------
Cells are labelled ``(j1, j2)`` with ``1 <= j1 <= M1`` and ``1 <= j2 <= M2``.
The dimension-1 threshold ``A1[j1][j2]`` (``j1 = 0..M1``, ``j2 = 1..M2``) is the
right edge of cell ``(j1, j2)``; the dimension-2 threshold ``A2[j1][j2]``
(``j1 = 1..M1``, ``j2 = 0..M2``) is its top edge. Boundary entries hold
``-inf`` / ``+inf``.

Storage is 0-based: ``a1[j1, j2 - 1]`` holds ``A1[j1][j2]`` (shape
``(M1 + 1, M2)``) and ``a2[j1 - 1, j2]`` holds ``A2[j1][j2]`` (shape
``(M1, M2 + 1)``). Use :meth:`ThresholdStructure.A1` / :meth:`ThresholdStructure.A2`
to read entries with model indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

EXACT_TOL = 1e-9
TIE_TOL = 1e-3


class StructureError(ValueError):
    """A threshold structure violates its invariants."""


class IncoherentStructureError(StructureError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"structure is not coherent at corners {self.violations}")


@dataclass(frozen=True)
class ResponseSpec:
    M1: int
    M2: int

    def __post_init__(self):
        if int(self.M1) < 1 or int(self.M2) < 1:
            raise StructureError("M1 and M2 must be positive")
        object.__setattr__(self, "M1", int(self.M1))
        object.__setattr__(self, "M2", int(self.M2))

    @property
    def n_cells(self) -> int:
        return self.M1 * self.M2

    def cells(self) -> Iterator[tuple[int, int]]:
        for j1 in range(1, self.M1 + 1):
            for j2 in range(1, self.M2 + 1):
                yield j1, j2


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ThresholdStructure:
    """Two threshold grids with +/-inf boundary rows, validated on construction."""

    a1: np.ndarray
    a2: np.ndarray
    spec: ResponseSpec = field(init=False)

    def __post_init__(self):
        a1 = _frozen(self.a1)
        a2 = _frozen(self.a2)
        if a1.ndim != 2 or a2.ndim != 2:
            raise StructureError("threshold grids must be 2-dimensional")
        M1 = a1.shape[0] - 1
        M2 = a1.shape[1]
        if M1 < 1 or a2.shape != (M1, M2 + 1):
            raise StructureError(
                f"grid shapes {a1.shape} and {a2.shape} are inconsistent; "
                "expected (M1+1, M2) and (M1, M2+1)"
            )
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "spec", ResponseSpec(M1, M2))
        if np.any(np.isnan(a1)) or np.any(np.isnan(a2)):
            raise StructureError("thresholds contain NaN")
        if not (np.all(a1[0] == -np.inf) and np.all(a1[M1] == np.inf)
                and np.all(a2[:, 0] == -np.inf) and np.all(a2[:, M2] == np.inf)):
            raise StructureError("boundary thresholds must be -inf / +inf")
        if np.any(np.isinf(a1[1:M1])) or np.any(np.isinf(a2[:, 1:M2])):
            raise StructureError("interior thresholds must be finite")
        if np.any(np.diff(a1, axis=0) <= 0):
            j1, j2 = np.argwhere(np.diff(a1, axis=0) <= 0)[0]
            raise StructureError(f"A1 not strictly increasing in j1 at row j2={j2 + 1}")
        if np.any(np.diff(a2, axis=1) <= 0):
            j1, j2 = np.argwhere(np.diff(a2, axis=1) <= 0)[0]
            raise StructureError(f"A2 not strictly increasing in j2 at column j1={j1 + 1}")

    # construction -----------------------------------------------------------

    @classmethod
    def from_interior(cls, a1_interior, a2_interior) -> "ThresholdStructure":
        """Build from interior grids ``(M1-1, M2)`` and ``(M1, M2-1)``."""
        i1 = np.atleast_2d(np.asarray(a1_interior, dtype=float))
        i2 = np.atleast_2d(np.asarray(a2_interior, dtype=float))
        M2 = i1.shape[1]
        M1 = i2.shape[0]
        return cls(*_pad(i1.reshape(M1 - 1, M2), i2.reshape(M1, M2 - 1)))

    @classmethod
    def lattice(cls, cuts1, cuts2) -> "ThresholdStructure":
        """Lattice structure from per-dimension cut points."""
        c1 = np.asarray(cuts1, dtype=float).ravel()
        c2 = np.asarray(cuts2, dtype=float).ravel()
        M1, M2 = c1.size + 1, c2.size + 1
        return cls.from_interior(np.repeat(c1[:, None], M2, axis=1),
                                 np.repeat(c2[None, :], M1, axis=0))

    @classmethod
    def empty(cls, spec: ResponseSpec) -> "ThresholdStructure":
        if spec.M1 != 1 and spec.M2 != 1:
            raise StructureError("only a 1 x M or M x 1 structure can be built without thresholds")
        return cls.from_interior(np.zeros((spec.M1 - 1, spec.M2)), np.zeros((spec.M1, spec.M2 - 1)))

    # access -----------------------------------------------------------------

    @property
    def M1(self) -> int:
        return self.spec.M1

    @property
    def M2(self) -> int:
        return self.spec.M2

    def A1(self, j1: int, j2: int) -> float:
        return float(self.a1[j1, j2 - 1])

    def A2(self, j1: int, j2: int) -> float:
        return float(self.a2[j1 - 1, j2])

    @property
    def interior1(self) -> np.ndarray:
        """Interior dimension-1 thresholds, shape ``(M1-1, M2)``."""
        return self.a1[1:self.M1]

    @property
    def interior2(self) -> np.ndarray:
        """Interior dimension-2 thresholds, shape ``(M1, M2-1)``."""
        return self.a2[:, 1:self.M2]

    def entries(self) -> Iterator[tuple[int, int, int]]:
        """Interior entries as ``(grid, j1, j2)`` keys in model indices."""
        for j1 in range(1, self.M1):
            for j2 in range(1, self.M2 + 1):
                yield 1, j1, j2
        for j1 in range(1, self.M1 + 1):
            for j2 in range(1, self.M2):
                yield 2, j1, j2

    def value(self, key: tuple[int, int, int]) -> float:
        g, j1, j2 = key
        return self.A1(j1, j2) if g == 1 else self.A2(j1, j2)

    def with_interior(self, a1_interior, a2_interior) -> "ThresholdStructure":
        return ThresholdStructure.from_interior(a1_interior, a2_interior)

    def translate(self, shift1: float = 0.0, shift2: float = 0.0) -> "ThresholdStructure":
        return ThresholdStructure(self.a1 + shift1, self.a2 + shift2)

    def is_lattice(self, tol: float = EXACT_TOL) -> bool:
        i1, i2 = self.interior1, self.interior2
        return bool(np.all(np.ptp(i1, axis=1) <= tol) if i1.size else True) and bool(
            np.all(np.ptp(i2, axis=0) <= tol) if i2.size else True
        )

    def __eq__(self, other):
        if not isinstance(other, ThresholdStructure):
            return NotImplemented
        return np.array_equal(self.a1, other.a1) and np.array_equal(self.a2, other.a2)

    def __repr__(self):
        return f"ThresholdStructure(M1={self.M1}, M2={self.M2}, A1={self.interior1.tolist()}, A2={self.interior2.tolist()})"

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {"M": [self.M1, self.M2], "A1": _encode_grid(self.a1), "A2": _encode_grid(self.a2)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdStructure":
        try:
            ts = cls(_decode_grid(doc["A1"]), _decode_grid(doc["A2"]))
        except KeyError as exc:
            raise StructureError(f"threshold document missing key {exc}") from None
        if "M" in doc and list(doc["M"]) != [ts.M1, ts.M2]:
            raise StructureError(f"declared M={doc['M']} does not match grid shapes")
        return ts

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdStructure":
        return cls.from_dict(json.loads(text))


def _pad(i1, i2):
    M1 = i1.shape[0] + 1
    M2 = i2.shape[1] + 1
    a1 = np.empty((M1 + 1, M2))
    a1[0] = -np.inf
    a1[M1] = np.inf
    a1[1:M1] = i1
    a2 = np.empty((M1, M2 + 1))
    a2[:, 0] = -np.inf
    a2[:, M2] = np.inf
    a2[:, 1:M2] = i2
    return a1, a2


def _encode(v):
    if v == np.inf:
        return "inf"
    if v == -np.inf:
        return "-inf"
    return float(v)


def _encode_grid(arr):
    return [[_encode(v) for v in row] for row in arr]


def _decode_grid(rows):
    return np.array([[float(v) for v in row] for row in rows], dtype=float)


# geometry -------------------------------------------------------------------


def cell_bounds(ts: ThresholdStructure, j1: int, j2: int) -> tuple[float, float, float, float]:
    """Rectangle ``(lo1, hi1] x (lo2, hi2]`` of cell ``(j1, j2)``."""
    if not (1 <= j1 <= ts.M1 and 1 <= j2 <= ts.M2):
        raise IndexError(f"cell ({j1}, {j2}) outside 1..{ts.M1} x 1..{ts.M2}")
    return (ts.A1(j1 - 1, j2), ts.A1(j1, j2), ts.A2(j1, j2 - 1), ts.A2(j1, j2))


def corner_gaps(ts: ThresholdStructure) -> tuple[np.ndarray, np.ndarray]:
    """Boundary jumps at every interior corner.

    Returns ``(d1, d2)`` with shape ``(M1-1, M2-1)``: ``d1[j1-1, j2-1] =
    A1[j1][j2+1] - A1[j1][j2]`` (vertical boundary jump across the corner) and
    ``d2[j1-1, j2-1] = A2[j1+1][j2] - A2[j1][j2]`` (horizontal boundary jump).
    """
    i1 = ts.interior1
    i2 = ts.interior2
    return np.diff(i1, axis=1), np.diff(i2, axis=0)


@dataclass(frozen=True)
class CoherencyReport:
    coherent: bool
    violations: list

    def __bool__(self):
        return self.coherent


def is_coherent(ts: ThresholdStructure, tol: float = EXACT_TOL) -> CoherencyReport:
    """Check that at each interior corner one boundary segment runs straight through."""
    d1, d2 = corner_gaps(ts)
    bad = np.minimum(np.abs(d1), np.abs(d2)) > tol
    violations = [(int(a) + 1, int(b) + 1) for a, b in np.argwhere(bad)]
    return CoherencyReport(not violations, violations)


def require_coherent(ts: ThresholdStructure, tol: float = EXACT_TOL) -> None:
    report = is_coherent(ts, tol)
    if not report.coherent:
        raise IncoherentStructureError(report.violations)


# decision trees -------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    j1: int
    j2: int


@dataclass(frozen=True)
class Split:
    """Internal node: ``left`` holds points with coordinate ``<= value``."""

    dim: int
    value: float
    left: "DecisionTree"
    right: "DecisionTree"


DecisionTree = Union[Leaf, Split]


def tree_leaves(tree: DecisionTree, box=None):
    """Yield ``(leaf, (lo1, hi1, lo2, hi2))`` for every leaf of ``tree``."""
    if box is None:
        box = (-np.inf, np.inf, -np.inf, np.inf)
    if isinstance(tree, Leaf):
        yield tree, box
        return
    lo1, hi1, lo2, hi2 = box
    if tree.dim == 1:
        yield from tree_leaves(tree.left, (lo1, tree.value, lo2, hi2))
        yield from tree_leaves(tree.right, (tree.value, hi1, lo2, hi2))
    else:
        yield from tree_leaves(tree.left, (lo1, hi1, lo2, tree.value))
        yield from tree_leaves(tree.right, (lo1, hi1, tree.value, hi2))


def tree_classify(tree: DecisionTree, y1: float, y2: float) -> tuple[int, int]:
    node = tree
    while isinstance(node, Split):
        coord = y1 if node.dim == 1 else y2
        node = node.left if coord <= node.value else node.right
    return node.j1, node.j2


def render_tree(tree: DecisionTree, indent: str = "") -> str:
    """Plain-text rendering of a decision tree, one node per line."""
    if isinstance(tree, Leaf):
        return f"{indent}cell ({tree.j1}, {tree.j2})"
    var = "Y*1" if tree.dim == 1 else "Y*2"
    inner = indent + "    "
    return "\n".join([
        f"{indent}{var} <= {tree.value:g}:",
        render_tree(tree.left, inner),
        f"{indent}{var} > {tree.value:g}:",
        render_tree(tree.right, inner),
    ])


def detect_hierarchy(ts: ThresholdStructure, tol: float = EXACT_TOL) -> Optional[DecisionTree]:
    """Find a binary decision tree representing ``ts``, or ``None``.

    At every sub-model the search looks for a threshold that is constant
    (within ``tol``) across the whole cross-section, trying dimension 1 before
    dimension 2 and lower values first. Raises if ``ts`` is not coherent.
    """
    require_coherent(ts, tol)
    a1, a2 = ts.a1, ts.a2

    def build(r1: int, s1: int, r2: int, s2: int):
        # sub-model over cells j1 in r1..s1, j2 in r2..s2 (model indices)
        if r1 == s1 and r2 == s2:
            return Leaf(r1, r2)
        for c in range(r1, s1):
            col = a1[c, r2 - 1:s2]
            if col.max() - col.min() <= tol:
                left = build(r1, c, r2, s2)
                if left is None:
                    return None
                right = build(c + 1, s1, r2, s2)
                if right is None:
                    return None
                return Split(1, float(col.mean()), left, right)
        for c in range(r2, s2):
            row = a2[r1 - 1:s1, c]
            if row.max() - row.min() <= tol:
                left = build(r1, s1, r2, c)
                if left is None:
                    return None
                right = build(r1, s1, c + 1, s2)
                if right is None:
                    return None
                return Split(2, float(row.mean()), left, right)
        return None

    return build(1, ts.M1, 1, ts.M2)


def tree_matches(tree: DecisionTree, ts: ThresholdStructure, tol: float = EXACT_TOL) -> bool:
    """True when every leaf rectangle equals its cell of ``ts`` within ``tol``."""
    seen = set()
    for leaf, box in tree_leaves(tree):
        key = (leaf.j1, leaf.j2)
        if key in seen:
            return False
        seen.add(key)
        cell = cell_bounds(ts, *key)
        for got, want in zip(box, cell):
            if np.isinf(got) or np.isinf(want):
                if got != want:
                    return False
            elif abs(got - want) > tol:
                return False
    return len(seen) == ts.spec.n_cells


# ties -----------------------------------------------------------------------


def tie_groups(ts: ThresholdStructure, tol: float = TIE_TOL) -> list[tuple[tuple[int, int, int], ...]]:
    """Partition interior threshold entries into equality classes.

    Two entries are linked when they sit on the same boundary line at
    adjacent cells and differ by at most ``tol``: ``A1[j1][j2]`` with
    ``A1[j1][j2+1]`` and ``A2[j1][j2]`` with ``A2[j1+1][j2]``. Classes are the
    connected components, each a sorted tuple of ``(grid, j1, j2)`` keys;
    the list is sorted by first member.
    """
    keys = list(ts.entries())
    index = {k: i for i, k in enumerate(keys)}
    parent = list(range(len(keys)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for j1 in range(1, ts.M1):
        for j2 in range(1, ts.M2):
            if abs(ts.A1(j1, j2 + 1) - ts.A1(j1, j2)) <= tol:
                union(index[(1, j1, j2)], index[(1, j1, j2 + 1)])
    for j1 in range(1, ts.M1):
        for j2 in range(1, ts.M2):
            if abs(ts.A2(j1 + 1, j2) - ts.A2(j1, j2)) <= tol:
                union(index[(2, j1, j2)], index[(2, j1 + 1, j2)])
    groups: dict[int, list] = {}
    for k in keys:
        groups.setdefault(find(index[k]), []).append(k)
    return sorted(tuple(sorted(g)) for g in groups.values())


def snap_ties(ts: ThresholdStructure, groups) -> ThresholdStructure:
    """Replace every entry of each class by the class mean."""
    i1 = np.array(ts.interior1)
    i2 = np.array(ts.interior2)
    for g in groups:
        mean = float(np.mean([ts.value(k) for k in g]))
        for grid, j1, j2 in g:
            if grid == 1:
                i1[j1 - 1, j2 - 1] = mean
            else:
                i2[j1 - 1, j2 - 1] = mean
    return ThresholdStructure.from_interior(i1, i2)


# random structures ------------------------------------------------------------


def random_coherent_structure(spec: ResponseSpec, rng: np.random.Generator,
                              range_: tuple[float, float] = (-4.0, 4.0),
                              grid_step: Optional[float] = None) -> ThresholdStructure:
    """Draw a coherent structure by growing a random binary decision tree.

    Every sub-model picks a split dimension and category boundary at random
    and a split value inside its current latent box (clipped to ``range_``).
    Values are rounded to a lattice of step ``grid_step`` (default: 1/32 of the
    range) when the box allows it, so equal thresholds across branches and
    lattice-like patterns occur with positive probability.
    """
    lo, hi = float(range_[0]), float(range_[1])
    if not hi > lo:
        raise ValueError("range must be a nondegenerate interval")
    step = (hi - lo) / 32.0 if grid_step is None else float(grid_step)
    M1, M2 = spec.M1, spec.M2
    i1 = np.zeros((M1 - 1, M2))
    i2 = np.zeros((M1, M2 - 1))

    def draw_value(box_lo, box_hi, n_left, n_right):
        # leave room for the splits still to come on each side
        a = max(box_lo, lo)
        b = min(box_hi, hi)
        if not np.isfinite(box_lo):
            a = min(a, b - 1.0)
        if not np.isfinite(box_hi):
            b = max(b, a + 1.0)
        span = b - a
        u_lo = a + span * n_left / (n_left + n_right + 1)
        u_hi = a + span * (n_left + 1) / (n_left + n_right + 1)
        v = rng.uniform(u_lo, u_hi)
        q = np.round(v / step) * step
        if u_lo < q < u_hi and box_lo < q < box_hi:
            return float(q)
        return float(v)

    def grow(r1, s1, r2, s2, box):
        n1, n2 = s1 - r1, s2 - r2
        if n1 == 0 and n2 == 0:
            return
        dim = 1 if n2 == 0 else 2 if n1 == 0 else int(rng.integers(1, 3))
        blo1, bhi1, blo2, bhi2 = box
        if dim == 1:
            c = int(rng.integers(r1, s1))
            v = draw_value(blo1, bhi1, c - r1, s1 - c - 1)
            i1[c - 1, r2 - 1:s2] = v
            grow(r1, c, r2, s2, (blo1, v, blo2, bhi2))
            grow(c + 1, s1, r2, s2, (v, bhi1, blo2, bhi2))
        else:
            c = int(rng.integers(r2, s2))
            v = draw_value(blo2, bhi2, c - r2, s2 - c - 1)
            i2[r1 - 1:s1, c - 1] = v
            grow(r1, s1, r2, c, (blo1, bhi1, blo2, v))
            grow(r1, s1, c + 1, s2, (blo1, bhi1, v, bhi2))

    grow(1, M1, 1, M2, (-np.inf, np.inf, -np.inf, np.inf))
    return ThresholdStructure.from_interior(i1, i2)
