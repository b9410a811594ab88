"""Monte Carlo replication driver and report rendering.

Replication ``r`` of a study with master seed ``s`` simulates from sub-seed
``derive_seed(s, r, STREAM_REPLICATION)`` and starts its optimizer from
``derive_seed(s, r, STREAM_MULTISTART)``, so every replication is a pure
function of ``(s, r)`` and the result does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dgp import DesignConfig, design, simulate
from .estimation import EstimationError, FitConfig, fit
from .likelihood import DataError, ModelParams
from .seeding import STREAM_MULTISTART, STREAM_REPLICATION, derive_seed

MODELS = ("nonlattice", "lattice")
THREADS_ENV = "ORDINO_THREADS"


def param_vector(params: ModelParams) -> dict:
    """Flat named view: coefficients, rho, then every interior threshold entry."""
    out = {}
    for i, v in enumerate(params.beta1):
        out[f"beta1[{i + 1}]"] = float(v)
    for i, v in enumerate(params.beta2):
        out[f"beta2[{i + 1}]"] = float(v)
    out["rho"] = params.rho
    for g, j1, j2 in params.thresholds.entries():
        out[f"A{g}[{j1},{j2}]"] = params.thresholds.value((g, j1, j2))
    return out


def worker_count(requested: Optional[int] = None) -> int:
    """Requested workers capped by ``ORDINO_THREADS`` (default: CPU count)."""
    cap = os.environ.get(THREADS_ENV)
    limit = max(1, int(cap)) if cap else (os.cpu_count() or 1)
    return max(1, min(requested or limit, limit))


@dataclass
class McSummary:
    """Across-replication moments per fitted model.

    ``estimates[model]`` lists one named-parameter dict per successful
    replication in replication order; ``failures[model]`` lists
    ``(replication, reason)`` pairs.
    """

    design: str
    reps: int
    n: int
    seed: int
    truth: dict
    estimates: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def models(self) -> list:
        return [m for m in MODELS if m in self.estimates]

    def n_ok(self, model: str) -> int:
        return len(self.estimates.get(model, []))

    def mean(self, model: str) -> dict:
        rows = self.estimates.get(model, [])
        if not rows:
            return {}
        return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}

    def sd(self, model: str) -> dict:
        """Sample SD (ddof 1); 0 when fewer than two replications succeeded."""
        rows = self.estimates.get(model, [])
        if not rows:
            return {}
        if len(rows) < 2:
            return {k: 0.0 for k in rows[0]}
        return {k: float(np.std([r[k] for r in rows], ddof=1)) for k in rows[0]}

    def sd_defined(self, model: str) -> bool:
        return self.n_ok(model) >= 2

    def to_dict(self) -> dict:
        # wall clock is left out so that files are reproducible byte for byte
        return {
            "design": self.design,
            "reps": self.reps,
            "n": self.n,
            "seed": self.seed,
            "truth": self.truth,
            "summary": {m: {"n_ok": self.n_ok(m), "mean": self.mean(m), "sd": self.sd(m),
                            "sd_defined": self.sd_defined(m)} for m in self.models()},
            "failures": {m: [list(f) for f in self.failures.get(m, [])] for m in self.models()},
            "estimates": self.estimates,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "McSummary":
        return cls(doc["design"], doc["reps"], doc["n"], doc["seed"], doc["truth"],
                   {m: list(v) for m, v in doc["estimates"].items()},
                   {m: [tuple(f) for f in v] for m, v in doc.get("failures", {}).items()})


def run_replication(config: DesignConfig, index: int, n: int, seed: int, fit_config: FitConfig,
                    models: Sequence[str] = MODELS) -> dict:
    """One replication: simulate, then fit each model. Returns per-model outcome."""
    data = simulate(config, n, derive_seed(seed, index, STREAM_REPLICATION))
    cfg = replace(fit_config, seed=derive_seed(seed, index, STREAM_MULTISTART), workers=1)
    out = {}
    for model in models:
        try:
            res = fit(data, config.spec, model, cfg)
        except (EstimationError, DataError, np.linalg.LinAlgError) as exc:
            out[model] = (None, f"{type(exc).__name__}: {exc}")
            continue
        if not res.converged:
            out[model] = (None, "; ".join(res.messages) or "not converged")
            continue
        out[model] = (param_vector(res.params_hat), None)
    return out


def _replication_job(args):
    return run_replication(*args)


def run_mc_study(design_id, reps: int, n: int, seed: int, config: FitConfig = FitConfig(),
                 workers: Optional[int] = None, models: Sequence[str] = MODELS) -> McSummary:
    """Replicate simulate-and-fit ``reps`` times and aggregate in replication order."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    cfg = design_id if isinstance(design_id, DesignConfig) else design(design_id)
    workers = worker_count(workers)
    jobs = [(cfg, r, n, seed, config, tuple(models)) for r in range(reps)]
    t0 = time.perf_counter()
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replication_job, jobs))
    else:
        outcomes = [_replication_job(j) for j in jobs]
    summary = McSummary(cfg.name, reps, n, seed, param_vector(cfg.truth_params()),
                        {m: [] for m in models}, {m: [] for m in models})
    for r, out in enumerate(outcomes):
        for m in models:
            est, reason = out[m]
            if est is None:
                summary.failures[m].append((r, reason))
            else:
                summary.estimates[m].append(est)
    summary.wall_clock = time.perf_counter() - t0
    return summary


# rendering ---------------------------------------------------------------------------


def _rows(summary: McSummary):
    models = summary.models()
    means = {m: summary.mean(m) for m in models}
    sds = {m: summary.sd(m) for m in models}
    for name, truth in summary.truth.items():
        yield name, truth, [(means[m].get(name), sds[m].get(name)) for m in models]


def render_table(summary: McSummary, fmt: str = "markdown") -> str:
    """Parameter | Truth | mean and SD per model; markdown shows 4 significant digits."""
    models = summary.models()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "truth"] + [f"{m}_{s}" for m in models for s in ("mean", "sd")])
        for name, truth, cells in _rows(summary):
            w.writerow([name, f"{truth:.17g}"] + [f"{v:.17g}" if v is not None else "" for c in cells for v in c])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")
    head = "| " + " | ".join(["Parameter", "Truth"] + [f"{m.capitalize()} mean (SD)" for m in models]) + " |"
    lines = [head, "|" + "---|" * (2 + len(models))]
    for name, truth, cells in _rows(summary):
        shown = [f"{m:.4g} ({s:.4g})" if m is not None else "" for m, s in cells]
        lines.append("| " + " | ".join([name, f"{truth:.4g}"] + shown) + " |")
    return "\n".join(lines) + "\n"
