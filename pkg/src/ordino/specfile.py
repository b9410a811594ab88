"""Versioned JSON model-spec documents.

A ``v1`` document::

    {"version": "v1", "M": [M1, M2],
     "columns1": ["x1_1", ...], "columns2": ["x2_1", ...],
     "exclusive1": [...], "exclusive2": [...],
     "thresholds": {...}}            # optional fixed structure

``exclusive*`` name columns that enter only one equation; ``thresholds``
uses the :class:`ThresholdStructure` JSON layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .likelihood import Dataset
from .structure import ResponseSpec, ThresholdStructure

VERSION = "v1"


class SpecFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelSpec:
    spec: ResponseSpec
    columns1: tuple = ()
    columns2: tuple = ()
    exclusive1: tuple = ()
    exclusive2: tuple = ()
    thresholds: Optional[ThresholdStructure] = None

    def __post_init__(self):
        for excl, cols, d in ((self.exclusive1, self.columns1, 1), (self.exclusive2, self.columns2, 2)):
            unknown = set(excl) - set(cols)
            if unknown:
                raise SpecFileError(f"exclusive{d} names undeclared columns {sorted(unknown)}")
        if self.thresholds is not None and self.thresholds.spec != self.spec:
            raise SpecFileError("threshold grid does not match M")

    def check_data(self, data: Dataset) -> None:
        if self.columns1 and tuple(data.names1) != tuple(self.columns1):
            raise SpecFileError(f"data X1 columns {list(data.names1)} differ from spec {list(self.columns1)}")
        if self.columns2 and tuple(data.names2) != tuple(self.columns2):
            raise SpecFileError(f"data X2 columns {list(data.names2)} differ from spec {list(self.columns2)}")

    def to_dict(self) -> dict:
        doc = {
            "version": VERSION,
            "M": [self.spec.M1, self.spec.M2],
            "columns1": list(self.columns1),
            "columns2": list(self.columns2),
            "exclusive1": list(self.exclusive1),
            "exclusive2": list(self.exclusive2),
        }
        if self.thresholds is not None:
            doc["thresholds"] = self.thresholds.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        if not isinstance(doc, dict):
            raise SpecFileError("spec document must be a JSON object")
        if doc.get("version") != VERSION:
            raise SpecFileError(f"unsupported spec version {doc.get('version')!r}; expected {VERSION!r}")
        try:
            M1, M2 = (int(m) for m in doc["M"])
        except (KeyError, TypeError, ValueError):
            raise SpecFileError("spec needs \"M\": [M1, M2]") from None
        ts = doc.get("thresholds")
        return cls(
            ResponseSpec(M1, M2),
            tuple(doc.get("columns1", ())),
            tuple(doc.get("columns2", ())),
            tuple(doc.get("exclusive1", ())),
            tuple(doc.get("exclusive2", ())),
            None if ts is None else ThresholdStructure.from_dict(ts),
        )


def load_spec(path) -> ModelSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecFileError(f"{path}: invalid JSON ({exc})") from None
    return ModelSpec.from_dict(doc)
