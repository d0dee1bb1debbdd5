"""Online postural optimisation: minimise risk while keeping the hand pose.

Two solvers share one problem statement: find a posture inside the joint
limits whose hand pose is within ``tolerance`` of the target (weighted squared
error) and whose ergonomic risk is lowest.

* :func:`optimize_gradient` minimises the DULA surrogate with SciPy's SLSQP,
  using exact network input gradients and the kinematic Jacobian.
* :func:`optimize_cem` is the gradient-free baseline: a cross-entropy search
  over postures scored by the exact RULA worksheet plus a violation penalty.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .dataset import NEUTRAL_POSTURE, make_rng, sample_posture
from .kinematics import (
    N_JOINTS,
    BodyDimensions,
    HandPose,
    InvalidInputError,
    JointLimits,
    as_posture,
    forward_kinematics,
    hand_frame,
    weighted_pose_error,
    weighted_pose_error_and_grad,
)
from .rula import CTX, TaskContext, rula
from .surrogate import SurrogateModel, featurize

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """No iterate met the pose constraint; ``result`` holds the least-violating one."""

    def __init__(self, result: OptResult):
        super().__init__(f"no feasible posture found (best constraint value {result.constraint_value:.3g})")
        self.result = result


class ModelFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class PoseConstraint:
    target: HandPose
    w_pos: float = 1.0  # m^-2
    w_ori: float = 0.1  # rad^-2
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.w_pos < 0.0 or self.w_ori < 0.0 or (self.w_pos == 0.0 and self.w_ori == 0.0):
            raise ValueError("weights must be nonnegative with at least one positive")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")

    def value(self, q, dims: BodyDimensions | None = None) -> float:
        R, p = hand_frame(as_posture(q), dims)
        return float(weighted_pose_error(self.target, R, p, self.w_pos, self.w_ori))

    def values(self, Q: np.ndarray, dims: BodyDimensions | None = None) -> np.ndarray:
        R, p = hand_frame(Q, dims)
        return weighted_pose_error(self.target, R, p, self.w_pos, self.w_ori)

    def value_and_grad(self, q, dims: BodyDimensions | None = None):
        return weighted_pose_error_and_grad(q, self.target, self.w_pos, self.w_ori, dims)

    def to_dict(self) -> dict:
        return {"target": self.target.to_dict(), "w_pos": self.w_pos, "w_ori": self.w_ori,
                "tolerance": self.tolerance}

    @classmethod
    def from_dict(cls, doc: dict) -> PoseConstraint:
        return cls(HandPose.from_dict(doc["target"]), doc.get("w_pos", 1.0), doc.get("w_ori", 0.1),
                   doc.get("tolerance", 1e-4))


@dataclass
class OptResult:
    q_star: np.ndarray
    dula_score: float
    rula_grand: int
    constraint_value: float
    iterations: int
    converged: bool
    wall_time: float
    method: str = "grad"
    evaluations: int = 0

    def to_dict(self, timing: bool = True) -> dict:
        doc = {
            "method": self.method,
            "q_star": self.q_star.tolist(),
            "dula_score": self.dula_score,
            "rula_grand": self.rula_grand,
            "constraint_value": self.constraint_value,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }
        if timing:
            doc["wall_time"] = self.wall_time
        return doc


@dataclass
class GradientOptions:
    starts: int = 2  # q0, neutral posture, then samples from the joint-limit box
    max_iter: int = 100
    ftol: float = 1e-9
    grad_tol: float = 1e-5
    seed: int = 0
    limits: JointLimits = field(default_factory=JointLimits.default)
    dims: BodyDimensions = field(default_factory=BodyDimensions)
    radius: float | None = None  # restrict the search to q0 +- radius (rad)


@dataclass
class CEMOptions:
    population: int = 10000
    elite_fraction: float = 0.1
    init_std: float = 0.2  # rad
    max_iters: int = 30
    penalty: float = 100.0  # added per unit of relative constraint excess
    min_std: float = 1e-4
    seed: int = 0
    limits: JointLimits = field(default_factory=JointLimits.default)
    dims: BodyDimensions = field(default_factory=BodyDimensions)
    radius: float | None = None  # restrict the search to q0 +- radius (rad)

    def __post_init__(self):
        if self.population < 1 or self.max_iters < 1:
            raise ValueError("population and max_iters must be >= 1")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in (0, 1]")


class _Box(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower, self.upper))


def _search_box(q0: np.ndarray, limits: JointLimits, radius: float | None) -> _Box:
    if radius is None:
        return _Box(limits.lower, limits.upper)
    if not radius > 0.0:
        raise ValueError("radius must be positive")
    return _Box(np.maximum(limits.lower, q0 - radius), np.minimum(limits.upper, q0 + radius))


def _check_start(q0, limits: JointLimits) -> np.ndarray:
    q0 = as_posture(q0)
    if not limits.contains(q0, tol=1e-12):
        raise InvalidInputError("start posture lies outside the joint limits")
    return np.clip(q0, limits.lower, limits.upper)


class _Objective:
    """DULA value/gradient in joint space with the context features frozen."""

    def __init__(self, model: SurrogateModel, ctx: TaskContext):
        self.model = model
        self.ctx_features = featurize(np.zeros(N_JOINTS), ctx, model.limits, model.neck_range)[N_JOINTS:]
        self.span = model.limits.upper - model.limits.lower
        self.scale = 2.0 / self.span
        self.lower = model.limits.lower
        self.calls = 0

    def features(self, q) -> np.ndarray:
        # same rounding as featurize, so values agree with model.score bit for bit
        return np.concatenate([2.0 * (q - self.lower) / self.span - 1.0, self.ctx_features])

    def __call__(self, q):
        self.calls += 1
        value, g = self.model.value_and_input_gradient(self.features(q))
        if not np.isfinite(value):
            raise ModelFailureError(f"non-finite surrogate output at q={q.tolist()}")
        return value, g[:N_JOINTS] * self.scale


# SLSQP treats the constraint boundary as feasible up to its own tolerance, so
# the solver aims slightly inside and acceptance uses the exact threshold.
_SOLVER_MARGIN = 0.98


def _constraint_dict(c: PoseConstraint, dims) -> dict:
    cache = {}

    def evaluate(q):
        key = q.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = c.value_and_grad(q, dims)
        return cache[key]

    return {
        "type": "ineq",
        "fun": lambda q: _SOLVER_MARGIN * c.tolerance - evaluate(q)[0],
        "jac": lambda q: -evaluate(q)[1],
    }


def optimize_gradient(model: SurrogateModel, ctx: TaskContext, q0, c: PoseConstraint,
                      opts: GradientOptions | None = None) -> OptResult:
    opts = opts or GradientOptions()
    t0 = time.perf_counter()
    q0 = _check_start(q0, opts.limits)
    lim = _search_box(q0, opts.limits, opts.radius)
    objective = _Objective(model, ctx)
    f0, g0 = objective(q0)
    c0 = c.value(q0, opts.dims)

    def result(q, f, cv, iters, converged):
        return OptResult(q.copy(), float(f), rula(q, ctx).grand, float(cv), iters, converged,
                         time.perf_counter() - t0, "grad", objective.calls)

    projected = q0 - np.clip(q0 - g0, lim.lower, lim.upper)
    if c0 < c.tolerance and np.linalg.norm(projected) < opts.grad_tol:
        return result(q0, f0, c0, 0, True)

    constraint = _constraint_dict(c, opts.dims)
    rng = make_rng(opts.seed, 6)
    # q0, then the neutral posture, then random postures
    starts = [q0, np.clip(NEUTRAL_POSTURE, lim.lower, lim.upper)][: opts.starts]
    starts += [sample_posture(rng, lim) for _ in range(opts.starts - len(starts))]
    feasible = [(f0, q0, c0, 0)] if c0 < c.tolerance else []
    best_infeasible = (c0, q0, f0, 0)
    for x0 in starts:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = minimize(objective, x0, jac=True, method="SLSQP", bounds=lim.bounds,
                           constraints=[constraint], options={"maxiter": opts.max_iter, "ftol": opts.ftol})
        x = np.clip(res.x, lim.lower, lim.upper)
        f, _ = objective(x)
        cv = c.value(x, opts.dims)
        iters = int(res.nit)
        if cv < c.tolerance:
            feasible.append((f, x, cv, iters))
        elif cv < best_infeasible[0]:
            best_infeasible = (cv, x, f, iters)
    if not feasible:
        cv, x, f, iters = best_infeasible
        raise InfeasibleError(result(x, f, cv, iters, False))
    # earliest start wins ties so q0 is kept when nothing improves on it
    f, x, cv, iters = min(feasible, key=lambda item: item[0])
    return result(x, f, cv, iters, True)


def optimize_cem(rula_fn: Callable, ctx: TaskContext, q0, c: PoseConstraint,
                 opts: CEMOptions | None = None, model: SurrogateModel | None = None,
                 batch_fn: Callable | None = None) -> OptResult:
    """Cross-entropy search scored by ``rula_fn(q, ctx)`` (an int or a breakdown).

    Each candidate costs ``grand + penalty * max(0, value / tolerance - 1)``.
    Candidates are clamped to the limits; iteration 0 contains ``q0`` itself,
    and the best feasible candidate ever seen is returned.

    ``batch_fn(Q, C)``, when given, scores a whole population at once (e.g.
    :func:`rula_batch`); it must agree with ``rula_fn`` sample by sample.
    """
    opts = opts or CEMOptions()
    t0 = time.perf_counter()
    q0 = _check_start(q0, opts.limits)
    lim = _search_box(q0, opts.limits, opts.radius)
    rng = make_rng(opts.seed, 7)
    n_elite = max(1, math.ceil(opts.elite_fraction * opts.population))
    mean = q0.copy()
    chol = np.eye(N_JOINTS) * opts.init_std

    ctx_row = ctx.to_array()

    def grand_of(q):
        out = rula_fn(q, ctx)
        return int(getattr(out, "grand", out))

    best = None  # (score, grand, q, constraint_value)
    best_any = None
    evaluations = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        X = mean + rng.standard_normal((opts.population, N_JOINTS)) @ chol.T
        X = np.clip(X, lim.lower, lim.upper)
        if it == 1:
            X[0] = q0
        cv = c.values(X, opts.dims)
        if batch_fn is None:
            grands = np.array([grand_of(x) for x in X], dtype=float)
        else:
            grands = np.asarray(batch_fn(X, np.broadcast_to(ctx_row, (len(X), ctx_row.size))), dtype=float)
        evaluations += len(X)
        excess = np.maximum(0.0, cv / c.tolerance - 1.0)
        scores = grands + opts.penalty * excess
        order = np.argsort(scores, kind="stable")
        feasible = np.flatnonzero(cv < c.tolerance)
        if len(feasible):
            i = feasible[np.argmin(scores[feasible])]
            if best is None or scores[i] < best[0]:
                best = (scores[i], int(grands[i]), X[i].copy(), float(cv[i]))
        i = order[0]
        if best_any is None or cv[i] < best_any[3]:
            best_any = (scores[i], int(grands[i]), X[i].copy(), float(cv[i]))
        elites = X[order[:n_elite]]
        mean = elites.mean(axis=0)
        cov = np.cov(elites.T, bias=True) if n_elite > 1 else np.zeros((N_JOINTS, N_JOINTS))
        std = np.sqrt(np.diag(cov))
        if std.max() < opts.min_std:
            break
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(N_JOINTS))

    def finish(entry, converged):
        _, grand, q, value = entry
        dula = model.score(q, ctx) if model is not None else float("nan")
        return OptResult(q, float(dula), grand, value, it, converged, time.perf_counter() - t0, "cem", evaluations)

    if best is None:
        raise InfeasibleError(finish(best_any, False))
    return finish(best, True)


# --- task batches and method comparison ---------------------------------------------


@dataclass
class OptTask:
    q0: np.ndarray
    ctx: TaskContext
    constraint: PoseConstraint

    def to_dict(self) -> dict:
        return {"q0": self.q0.tolist(), "context": self.ctx.to_dict(), "constraint": self.constraint.to_dict()}


def sample_task_context(rng: np.random.Generator) -> TaskContext:
    """Light-duty context: posture dominates the score, so there is room to reduce it."""
    C = TaskContext().to_array()
    C[CTX["arm_load_kg"]] = rng.uniform(0.0, 4.0)
    C[CTX["body_load_kg"]] = rng.uniform(0.0, 4.0)
    C[CTX["neck_angle_deg"]] = rng.uniform(0.0, 25.0)
    for name in ("arm_static_or_repeated", "body_static_or_repeated", "shoulder_raised", "neck_twist"):
        C[CTX[name]] = float(rng.random() < 0.2)
    return TaskContext.from_array(C)


def make_tasks(n: int, seed: int, limits: JointLimits | None = None,
               dims: BodyDimensions | None = None, **constraint_kw) -> list[OptTask]:
    """Feasible-by-construction tasks: the target is the hand pose of a random start posture."""
    limits = limits or JointLimits.default()
    rng = make_rng(seed, 8)
    tasks = []
    for _ in range(n):
        q0 = sample_posture(rng, limits)
        ctx = sample_task_context(rng)
        tasks.append(OptTask(q0, ctx, PoseConstraint(forward_kinematics(q0, dims), **constraint_kw)))
    return tasks


def compare(model: SurrogateModel, rula_fn: Callable, tasks: Sequence[OptTask],
            grad_opts: GradientOptions | None = None, cem_opts: CEMOptions | None = None) -> dict:
    """Run both solvers on every task; rows are paired per task (grad first, then cem)."""
    grad_opts = grad_opts or GradientOptions()
    cem_opts = cem_opts or CEMOptions()
    rows = []
    for k, task in enumerate(tasks):
        initial = rula(task.q0, task.ctx).grand
        for method in ("grad", "cem"):
            t0 = time.perf_counter()
            try:
                if method == "grad":
                    res = optimize_gradient(model, task.ctx, task.q0, task.constraint, grad_opts)
                else:
                    res = optimize_cem(rula_fn, task.ctx, task.q0, task.constraint, cem_opts, model)
                feasible = True
            except InfeasibleError as exc:
                res, feasible = exc.result, False
            rows.append({
                "task": k, "method": method, "initial_rula": initial, "optimal_rula": res.rula_grand,
                "dula_score": res.dula_score, "constraint_value": res.constraint_value,
                "feasible": feasible, "wall_time": time.perf_counter() - t0,
            })
    return {"rows": rows, "summary": summarize_comparison(rows)}


def summarize_comparison(rows: list[dict]) -> dict:
    out = {}
    for method in ("grad", "cem"):
        sel = [r for r in rows if r["method"] == method]
        if not sel:
            continue
        out[method] = {
            "tasks": len(sel),
            "feasible": sum(r["feasible"] for r in sel),
            "median_initial_rula": float(np.median([r["initial_rula"] for r in sel])),
            "median_optimal_rula": float(np.median([r["optimal_rula"] for r in sel])),
            "median_wall_time": float(np.median([r["wall_time"] for r in sel])),
        }
    if "grad" in out and "cem" in out and out["grad"]["median_wall_time"] > 0:
        out["time_ratio_cem_over_grad"] = out["cem"]["median_wall_time"] / out["grad"]["median_wall_time"]
    return out
