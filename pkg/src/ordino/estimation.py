"""Penalized multistart maximum likelihood and constrained-MLE covariance.

The search runs over ``x = (beta1, beta2, alpha, t)`` with ``rho = tanh(t)``;
``alpha`` holds the free threshold classes of a :class:`ThresholdLayout`.
Each start is screened by a structured quasi-Newton, first under a weak penalty and
then at full strength to a loose tolerance; the best screened start
is polished (quasi-Newton, then Newton steps on a finite-difference Hessian of the
analytic gradient), near-equal threshold entries are snapped together and the
reduced model is re-maximized before the covariance is computed.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .likelihood import DataError, Dataset, LikelihoodModel, ModelParams, ThresholdLayout
from .seeding import STREAM_MULTISTART, generator
from .structure import ResponseSpec, ThresholdStructure, snap_ties, tie_groups

T_BOUND = 15.0  # |t| cap keeps rho = tanh(t) strictly inside (-1, 1) in floating point
MIN_GAP = 1e-3  # spacing enforced between sorted starting thresholds
DROP_TOL = 1e-8  # constraint rows with smaller gradient norm are dropped
WARM_LAMBDA_FRACTION = 1e-4  # penalty weight of the warm-up stage, relative to lambda
WARM_TOL = 1e-3
POLISH_HANDOFF = 1e-6  # gradient level at which quasi-Newton hands over to Newton steps


class EstimationError(RuntimeError):
    pass


class DegenerateDataError(DataError):
    pass


class SingularInformationError(EstimationError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"information matrix is singular (condition number {cond:.3e})")


@dataclass(frozen=True)
class FitConfig:
    """Estimator settings.

    Attributes:
        lam: Penalty weight; ``None`` means the sample size N.
        multistart: Number of random starts.
        max_iter: Iteration cap for each optimizer stage.
        gtol: Sup-norm gradient tolerance for convergence.
        tie_tol: Entries closer than this along a boundary line are snapped.
        seed: Seed of the start generator.
        screen_tol: Gradient tolerance used while screening starts.
        workers: Process count for screening starts.
    """

    lam: Optional[float] = None
    multistart: int = 64
    max_iter: int = 500
    gtol: float = 1e-8
    tie_tol: float = 1e-3
    seed: int = 0
    screen_tol: float = 1e-4
    workers: int = 1

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if self.multistart < 1 or self.max_iter < 1 or self.workers < 1:
            raise ValueError("multistart, max_iter and workers must be positive")
        if not (self.gtol > 0 and self.screen_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.tie_tol >= 0:
            raise ValueError("tie_tol must be nonnegative")


# optimizer ------------------------------------------------------------------------


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    converged: bool
    n_iter: int
    n_eval: int
    trace: list = field(default_factory=list)


class _Objective:
    """Negated penalized objective over optimizer coordinates, with a validity guard.

    Calls return ``(f, g)``; the likelihood part of the last gradient is kept
    in ``lik_grad`` for the structured quasi-Newton update.
    """

    def __init__(self, model: LikelihoodModel, lam: float):
        self.model = model
        self.lam = lam
        self.n_eval = 0
        self.lik_grad = None
        self._na = model.n_alpha
        self._off = model.k1 + model.k2

    def theta(self, x) -> np.ndarray:
        th = np.array(x, dtype=float)
        th[-1] = math.tanh(x[-1])
        return th

    def valid(self, x) -> bool:
        if not np.all(np.isfinite(x)) or abs(x[-1]) > T_BOUND:
            return False
        return self.model.layout.monotone(x[self._off:self._off + self._na])

    def __call__(self, x):
        self.n_eval += 1
        th = self.theta(x)
        ll, gl = self.model.loglik_and_score(th)
        pen, gp = self.model.penalty_and_grad(th, self.lam)
        gl[-1] *= 1.0 - th[-1] ** 2
        self.lik_grad = -gl
        return -(ll + pen), -(gl + gp)

    def penalty_hessian(self, x) -> np.ndarray:
        # the penalty does not involve t, so no chain-rule factor is needed
        return -self.model.penalty_hessian(self.theta(x), self.lam)


def _line_search(fun, valid, x, f, g, p, relaxed=False, max_halvings=50):
    slope = float(g @ p)
    step = 1.0
    for _ in range(max_halvings):
        xn = x + step * p
        if valid(xn):
            fn, gn = fun(xn)
            if np.isfinite(fn):
                if fn <= f + 1e-4 * step * slope:
                    return xn, fn, gn
                # near the optimum f differences drown in rounding; accept on gradient decrease
                if relaxed and fn <= f + 8 * np.finfo(float).eps * abs(f) and np.max(np.abs(gn)) < np.max(np.abs(g)):
                    return xn, fn, gn
                denom = 2.0 * (fn - f - step * slope)
                if denom > 0:
                    step = min(0.5 * step, max(0.1 * step, -slope * step * step / denom))
                    continue
        step *= 0.5
    return None


def _modified_newton_step(M, g):
    # eigenvalue-modified solve: |eigenvalues| floored, so the step is a descent direction
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    floor = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    return -V @ ((V.T @ g) / np.maximum(np.abs(w), floor))


def quasi_newton(obj: _Objective, x0, gtol, max_iter, max_step=2.0) -> OptimResult:
    """Structured BFGS descent on ``obj``.

    The model Hessian is a BFGS approximation of the likelihood part plus the
    exact penalty Hessian, whose curvature (of order lambda) would otherwise
    take a plain BFGS hundreds of updates to learn. Steps use Armijo
    backtracking; points failing ``obj.valid`` are treated as rejected.
    """
    x = np.array(x0, dtype=float)
    f, g = obj(x)
    gl = obj.lik_grad
    n = x.size
    B = np.eye(n)
    fresh = True
    trace = [-f]
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            return OptimResult(x, f, g, True, it - 1, obj.n_eval, trace)
        p = _modified_newton_step(B + obj.penalty_hessian(x), g)
        big = np.max(np.abs(p))
        if big > max_step:
            p *= max_step / big
        found = _line_search(obj, obj.valid, x, f, g, p)
        if found is None:
            if fresh:
                break
            B = np.eye(n)
            fresh = True
            continue
        xn, fn, gn = found
        gln = obj.lik_grad
        s = xn - x
        y = gln - gl
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh:
                B = np.eye(n) * (float(y @ y) / sy)
            Bs = B @ s
            B = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / sy
            fresh = False
        x, f, g, gl = xn, fn, gn, gln
        trace.append(-f)
    return OptimResult(x, f, g, bool(np.max(np.abs(g)) <= gtol), it, obj.n_eval, trace)


def _fd_hessian(fun, valid, x, g0):
    n = x.size
    Hs = np.empty((n, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        if valid(x + e) and valid(x - e):
            Hs[:, i] = (fun(x + e)[1] - fun(x - e)[1]) / (2 * h)
        elif valid(x + e):
            Hs[:, i] = (fun(x + e)[1] - g0) / h
        else:
            Hs[:, i] = (g0 - fun(x - e)[1]) / h
    return 0.5 * (Hs + Hs.T)


def newton_polish(fun, valid, x0, gtol, max_iter=50) -> OptimResult:
    """Newton steps with an eigenvalue-modified finite-difference Hessian."""
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    trace = [-f]
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            return OptimResult(x, f, g, True, it - 1, 0, trace)
        p = _modified_newton_step(_fd_hessian(fun, valid, x, g), g)
        found = _line_search(fun, valid, x, f, g, p, relaxed=True)
        if found is None:
            break
        x, f, g = found
        trace.append(-f)
    return OptimResult(x, f, g, bool(np.max(np.abs(g)) <= gtol), it, 0, trace)


def _simplex(fun, valid, x0, max_iter):
    def f_only(x):
        return fun(x)[0] if valid(x) else np.inf

    res = optimize.minimize(f_only, x0, method="Nelder-Mead",
                            options={"maxiter": max_iter * 20, "xatol": 1e-10, "fatol": 1e-14})
    return res.x if valid(res.x) and f_only(res.x) <= f_only(x0) else np.asarray(x0, dtype=float)


def maximize(obj: _Objective, x0, gtol, max_iter) -> OptimResult:
    """Full-precision ascent: quasi-Newton, simplex fallback on a stall, then Newton polish."""
    # quasi-Newton steps lose precision near the optimum; Newton finishes from a moderate tolerance
    first = quasi_newton(obj, x0, max(gtol, POLISH_HANDOFF), max_iter)
    trace = list(first.trace)
    x = first.x
    if not first.converged and np.max(np.abs(first.g)) > 1e-3:
        x = _simplex(obj, obj.valid, x, max_iter)
        again = quasi_newton(obj, x, max(gtol, POLISH_HANDOFF), max_iter)
        x = again.x
        trace += again.trace
    pol = newton_polish(obj, obj.valid, x, gtol)
    trace += pol.trace
    return OptimResult(pol.x, pol.f, pol.g, pol.converged, first.n_iter + pol.n_iter, obj.n_eval, trace)


# starts --------------------------------------------------------------------------


def _strict_sort(v):
    v = np.sort(np.asarray(v, dtype=float))
    for i in range(1, v.size):
        if v[i] < v[i - 1] + MIN_GAP:
            v[i] = v[i - 1] + MIN_GAP
    return v


def _cuts(latent, labels, M):
    # quantiles of the latent draw at the cumulative label frequencies
    n = labels.size
    freq = np.cumsum(np.bincount(labels, minlength=M + 1)[1:])[:-1] / n
    q = np.clip(freq, 0.5 / n, 1.0 - 0.5 / n)
    return np.quantile(latent, q)


def multistart_draw(config: FitConfig, spec: ResponseSpec, data: Dataset, rng: np.random.Generator) -> ModelParams:
    """Random starting point.

    Coefficients are N(0, 0.5^2). Each threshold line is placed at quantiles
    of a noisy index ``x b + N(0, 1)`` matched to the observed conditional
    category frequencies, jittered by N(0, 0.25^2) and re-sorted. The
    correlation is U(-0.8, 0.8).
    """
    M1, M2 = spec.M1, spec.M2
    b1 = rng.normal(0.0, 0.5, data.k1)
    b2 = rng.normal(0.0, 0.5, data.k2)
    lat1 = data.X1 @ b1 + rng.standard_normal(data.n)
    lat2 = data.X2 @ b2 + rng.standard_normal(data.n)
    a1 = np.zeros((M1 - 1, M2))
    a2 = np.zeros((M1, M2 - 1))
    for j2 in range(1, M2 + 1):
        sel = data.y2 == j2
        if sel.sum() < 2 * M1:
            sel = slice(None)
        a1[:, j2 - 1] = _strict_sort(_cuts(lat1[sel], data.y1[sel], M1) + rng.normal(0.0, 0.25, M1 - 1))
    for j1 in range(1, M1 + 1):
        sel = data.y1 == j1
        if sel.sum() < 2 * M2:
            sel = slice(None)
        a2[j1 - 1, :] = _strict_sort(_cuts(lat2[sel], data.y2[sel], M2) + rng.normal(0.0, 0.25, M2 - 1))
    rho0 = rng.uniform(-0.8, 0.8)
    return ModelParams(b1, b2, ThresholdStructure.from_interior(a1, a2), rho0)


# covariance ------------------------------------------------------------------------


def constrained_covariance(J, R=None, drop_tol: float = DROP_TOL):
    """Asymptotic covariance ``B J B'`` of a constrained MLE.

    ``B = J^-1 - J^-1 R'(R J^-1 R')^-1 R J^-1``; rows of ``R`` whose norm is
    at most ``drop_tol`` are dropped first, and with no rows left the result
    is ``J^-1``.
    """
    J = np.asarray(J, dtype=float)
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularInformationError(float(cond))
    Jinv = np.linalg.inv(J)
    Jinv = 0.5 * (Jinv + Jinv.T)
    if R is None:
        return Jinv
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.size:
        R = R[np.linalg.norm(R, axis=1) > drop_tol]
    if R.shape[0] == 0:
        return Jinv
    JR = Jinv @ R.T
    B = Jinv - JR @ np.linalg.solve(R @ JR, JR.T)
    V = B @ J @ B.T
    return 0.5 * (V + V.T)


def covariance(model: LikelihoodModel, theta) -> np.ndarray:
    """Sampling covariance ``V / N`` at ``theta`` (natural coordinates)."""
    S = model.score_obs(theta)
    n = S.shape[0]
    J = (S.T @ S) / n
    V = constrained_covariance(J, model.constraint_jacobian(theta))
    return V / n


# results ---------------------------------------------------------------------------


@dataclass(eq=False)
class EstimationResult:
    """Outcome of one fit.

    ``names``, ``theta``, ``covariance`` and ``se`` refer to the final
    (post-snap) parameterization in natural coordinates, with rho last.
    """

    model: str
    params_hat: ModelParams
    names: list
    theta: np.ndarray
    covariance: Optional[np.ndarray]
    se: Optional[np.ndarray]
    loglik_at_max: float
    penalty_at_max: float
    converged: bool
    grad_norm: float
    starts_tried: int
    best_start: int
    tie_report: list
    classes: list
    trace: list
    config: FitConfig
    n: int
    messages: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.loglik_at_max + self.penalty_at_max

    def entry_se(self) -> dict:
        """Standard error of each interior threshold entry, keyed ``A{g}[j1,j2]``."""
        if self.se is None:
            return {}
        out = {}
        for name, s in zip(self.names, self.se):
            if name.startswith("A"):
                for member in name.split("~"):
                    out[member] = float(s)
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "estimates": {k: float(v) for k, v in zip(self.names, self.theta)},
            "se": None if self.se is None else {k: float(v) for k, v in zip(self.names, self.se)},
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "params": self.params_hat.to_dict(),
            "loglik": self.loglik_at_max,
            "penalty": self.penalty_at_max,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "starts_tried": self.starts_tried,
            "best_start": self.best_start,
            "tie_report": [[list(m) for m in c] for c in self.tie_report],
            "messages": list(self.messages),
            "config": asdict(self.config),
            "seed": self.config.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# driver ----------------------------------------------------------------------------


def check_data(data: Dataset, spec: ResponseSpec, n_params: int) -> None:
    data.check_spec(spec)
    missing = [f"y1={j}" for j in range(1, spec.M1 + 1) if not np.any(data.y1 == j)]
    missing += [f"y2={j}" for j in range(1, spec.M2 + 1) if not np.any(data.y2 == j)]
    if missing:
        raise DegenerateDataError(f"response categories never observed: {', '.join(missing)}")
    if data.n <= n_params:
        raise DataError(f"need more observations ({data.n}) than free parameters ({n_params})")


def _to_x(model: LikelihoodModel, theta) -> np.ndarray:
    x = np.array(theta, dtype=float)
    x[-1] = math.atanh(np.clip(x[-1], -math.tanh(T_BOUND), math.tanh(T_BOUND)))
    return x


def _screen_one(args):
    data, layout, lam, config, index = args
    model = LikelihoodModel(data, layout)
    obj = _Objective(model, lam)
    start = multistart_draw(config, layout.spec, data, generator(config.seed, index, STREAM_MULTISTART))
    x0 = _to_x(model, model.theta_of(start))
    if not obj.valid(x0):
        return index, np.inf, x0
    # a weak penalty first lets the likelihood place the thresholds before the
    # full penalty pins boundary jumps; starting at full strength traps starts
    warm = quasi_newton(_Objective(model, lam * WARM_LAMBDA_FRACTION), x0, WARM_TOL, config.max_iter)
    res = quasi_newton(obj, warm.x, config.screen_tol, config.max_iter)
    return index, float(res.f), res.x


def _screen(data, layout, lam, config):
    jobs = [(data, layout, lam, config, i) for i in range(config.multistart)]
    if config.workers > 1 and config.multistart > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            out = list(pool.map(_screen_one, jobs))
    else:
        out = [_screen_one(j) for j in jobs]
    # winner by objective, then start index: independent of completion order
    out.sort(key=lambda r: (r[1], r[0]))
    return out


def _layout_for(model: str, spec: ResponseSpec) -> ThresholdLayout:
    if model == "nonlattice":
        return ThresholdLayout.nonlattice(spec)
    if model == "lattice":
        return ThresholdLayout.lattice(spec)
    raise ValueError(f"unknown model {model!r}")


def _snap_layout(layout: ThresholdLayout, ts: ThresholdStructure, tol: float):
    groups = tie_groups(ts, tol)
    new = ThresholdLayout.from_classes(layout.spec, groups)
    # a group is a snap when it merges entries the old layout kept apart
    old_of = {}
    for i, members in enumerate(layout.classes()):
        for m in members:
            old_of[m] = i
    report = [g for g in groups if len({old_of[m] for m in g}) > 1]
    return new, snap_ties(ts, groups), report


def fit(data: Dataset, spec: ResponseSpec, model: str = "nonlattice",
        config: FitConfig = FitConfig()) -> EstimationResult:
    """Penalized multistart MLE under the ``nonlattice`` or ``lattice`` layout."""
    layout = _layout_for(model, spec)
    lik = LikelihoodModel(data, layout)
    check_data(data, spec, lik.n_params)
    lam = float(data.n) if config.lam is None else float(config.lam)
    messages = []

    screened = _screen(data, layout, lam, config)
    best_index, best_f, best_x = screened[0]
    if not np.isfinite(best_f):
        raise EstimationError("no start produced a finite objective")
    obj = _Objective(lik, lam)
    res = maximize(obj, best_x, config.gtol, config.max_iter)
    trace = res.trace

    # tie snap and reduced re-fit
    theta = obj.theta(res.x)
    ts_hat = lik.params_of(theta).thresholds
    new_layout, ts_snap, report = _snap_layout(layout, ts_hat, config.tie_tol)
    final_lik, final_obj, final = lik, obj, res
    if new_layout.n_alpha < layout.n_alpha:
        b1, b2, _, rho = lik.split(theta)
        red = LikelihoodModel(data, new_layout)
        red_obj = _Objective(red, lam)
        x0 = _to_x(red, red.join(b1, b2, new_layout.pack(ts_snap), rho))
        if red_obj.valid(x0):
            final_lik, final_obj = red, red_obj
            final = maximize(red_obj, x0, config.gtol, config.max_iter)
            trace = trace + final.trace
        else:
            report = []
            messages.append("snapped thresholds violate monotonicity; kept the unsnapped fit")

    theta = final_obj.theta(final.x)
    ll = final_lik.loglik(theta)
    pen = final_lik.penalty_and_grad(theta, lam)[0]
    if not final.converged:
        messages.append(f"gradient norm {np.max(np.abs(final.g)):.3e} above tolerance {config.gtol:g}")
    try:
        cov = covariance(final_lik, theta)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except SingularInformationError as exc:
        cov, se = None, None
        messages.append(str(exc))

    return EstimationResult(
        model=model,
        params_hat=final_lik.params_of(theta),
        names=final_lik.names(),
        theta=theta,
        covariance=cov,
        se=se,
        loglik_at_max=ll,
        penalty_at_max=pen,
        converged=final.converged,
        grad_norm=float(np.max(np.abs(final.g))),
        starts_tried=config.multistart,
        best_start=int(best_index),
        tie_report=report,
        classes=final_lik.layout.classes(),
        trace=trace,
        config=config,
        n=data.n,
        messages=messages,
    )


def fit_nonlattice(data: Dataset, spec: ResponseSpec, config: FitConfig = FitConfig()) -> EstimationResult:
    """Fit with every interior threshold entry free, under the coherency penalty."""
    return fit(data, spec, "nonlattice", config)


def fit_lattice(data: Dataset, spec: ResponseSpec, config: FitConfig = FitConfig()) -> EstimationResult:
    """Fit with one threshold per line (coherent by construction)."""
    return fit(data, spec, "lattice", config)
