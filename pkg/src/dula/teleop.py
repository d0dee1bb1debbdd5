"""Goal-constrained teleoperation with a simulated operator.

The operator drives a leader device with the hand; the follower end-effector
pose is the hand pose pushed through a fixed rigid transform. At every
re-plan the operator solves a short-horizon problem

    min over q_1..q_H   sum_k  |x_goal - x_follower(q_k)|^2_Sigma + alpha * |q_k - q_suggested|^2

under joint limits and a per-step velocity limit, then executes the first
step. ``alpha`` in [0, 1] models how much of the suggested posture the
operator is willing to adopt; with no suggestion the current posture stands
in, which turns the term into a plain motion-effort penalty.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .dataset import make_rng
from .kinematics import (
    N_JOINTS,
    BodyDimensions,
    HandPose,
    JointLimits,
    axis_rotation,
    forward_kinematics,
    hand_frame,
    weighted_pose_error,
    weighted_pose_error_and_grad,
)
from .optimizer import (
    CEMOptions,
    GradientOptions,
    InfeasibleError,
    PoseConstraint,
    optimize_cem,
    optimize_gradient,
)
from .rula import TaskContext, rula, rula_batch, rula_grand
from .surrogate import SurrogateModel

log = logging.getLogger(__name__)

CORRECTIONS = ("none", "grad", "cem")


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, pose: HandPose) -> HandPose:
        R = self.rotation @ pose.rotation
        return HandPose.from_matrix(R, self.rotation @ pose.position + self.translation)

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> RigidTransform:
        return cls(np.array(doc["rotation"], dtype=float), np.array(doc["translation"], dtype=float))


def default_leader_to_follower() -> RigidTransform:
    """Follower stands 1.2 m in front of the operator, facing back."""
    return RigidTransform(axis_rotation(np.array([0.0, 0.0, 1.0]), np.pi), np.array([1.2, 0.0, 0.0]))


@dataclass
class TeleopTask:
    start: np.ndarray
    follower_goal: HandPose
    leader_to_follower: RigidTransform = field(default_factory=default_leader_to_follower)
    tolerance: float = 1e-2
    max_steps: int = 150
    dt: float = 0.1
    w_pos: float = 100.0
    w_ori: float = 10.0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        if not self.tolerance > 0.0:
            raise ValueError("goal tolerance must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def hand_goal(self) -> HandPose:
        # a rigid map preserves both position distance and geodesic angle,
        # so the follower error equals the hand error against this pose
        return self.leader_to_follower.inverse().apply(self.follower_goal)

    def to_dict(self) -> dict:
        return {
            "start": self.start.tolist(), "follower_goal": self.follower_goal.to_dict(),
            "leader_to_follower": self.leader_to_follower.to_dict(), "tolerance": self.tolerance,
            "max_steps": self.max_steps, "dt": self.dt, "w_pos": self.w_pos, "w_ori": self.w_ori,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TeleopTask:
        doc = dict(doc)
        doc["follower_goal"] = HandPose.from_dict(doc["follower_goal"])
        if "leader_to_follower" in doc:
            doc["leader_to_follower"] = RigidTransform.from_dict(doc["leader_to_follower"])
        return cls(**doc)


@dataclass
class HumanModelConfig:
    alpha: float = 1.0
    horizon: int = 5
    velocity_limit: float = 1.0  # rad/s, every joint
    replan_period: int = 1
    suggestion_period: int = 1
    max_plan_iter: int = 100
    # suggestions are searched within +-radius of the current posture (rad)
    suggestion_radius: float | None = 0.3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.horizon < 1 or self.replan_period < 1 or self.suggestion_period < 1:
            raise ValueError("horizon and periods must be >= 1")
        if not self.velocity_limit > 0.0:
            raise ValueError("velocity_limit must be positive")
        if self.suggestion_radius is not None and not self.suggestion_radius > 0.0:
            raise ValueError("suggestion_radius must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    t: int
    q: np.ndarray
    suggested: np.ndarray | None
    rula: int
    dula: float
    suggested_rula: int | None
    follower_pose: HandPose
    goal_error: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "q": self.q.tolist(),
            "suggested": None if self.suggested is None else self.suggested.tolist(),
            "rula": self.rula,
            "dula": self.dula,
            "suggested_rula": self.suggested_rula,
            "follower_position": self.follower_pose.position.tolist(),
            "follower_orientation": self.follower_pose.orientation.tolist(),
            "goal_error": self.goal_error,
        }


@dataclass
class SimulationTrace:
    steps: list
    completed: bool
    completion_step: int | None
    correction: str
    alpha: float
    dt: float
    seed: int = 0

    @property
    def timeout(self) -> bool:
        return not self.completed

    def executed_records(self) -> list[dict]:
        """Per-step state of the simulated operator, without suggestion fields."""
        keep = ("t", "q", "rula", "dula", "follower_position", "follower_orientation", "goal_error")
        return [{k: s.to_dict()[k] for k in keep} for s in self.steps]

    def to_jsonl(self, **extra) -> str:
        """One JSON object per step; ``extra`` keys are added to every record."""
        return "".join(json.dumps({**s.to_dict(), **extra}, sort_keys=True) + "\n" for s in self.steps)

    def summary(self) -> dict:
        return {
            "correction": self.correction, "alpha": self.alpha, "dt": self.dt, "seed": self.seed,
            "steps": len(self.steps), "completed": self.completed,
            "completion_step": self.completion_step, "timeout": self.timeout,
        }


# --- operator motion planning --------------------------------------------------------


def _velocity_constraint(horizon: int, q_now: np.ndarray, max_step: float):
    """Linear inequalities b - A x >= 0 for |q_k - q_{k-1}| <= max_step, k = 1..H."""
    n = horizon * N_JOINTS
    D = np.eye(n)
    D[N_JOINTS:, :-N_JOINTS] -= np.eye(n - N_JOINTS)  # x_k - x_{k-1}
    offset = np.zeros(n)
    offset[:N_JOINTS] = q_now
    A = np.vstack([D, -D])
    b = np.concatenate([max_step + offset, max_step - offset])
    return {"type": "ineq", "fun": lambda x: b - A @ x, "jac": lambda x: -A}


def plan_cost(X: np.ndarray, q_star: np.ndarray, hand_goal: HandPose, task: TeleopTask, alpha: float,
              dims: BodyDimensions | None = None) -> tuple[float, np.ndarray]:
    """Horizon cost and gradient for stacked postures X (H, 10)."""
    total = 0.0
    grad = np.empty_like(X)
    for k, q in enumerate(X):
        err, g = weighted_pose_error_and_grad(q, hand_goal, task.w_pos, task.w_ori, dims)
        d = q - q_star
        total += err + alpha * float(d @ d)
        grad[k] = g + (2.0 * alpha) * d
    return total, grad


def human_plan(q_now, q_star, task: TeleopTask, cfg: HumanModelConfig, limits: JointLimits | None = None,
               dims: BodyDimensions | None = None, warm_start: np.ndarray | None = None) -> np.ndarray:
    """Joint trajectory (H, 10) trading goal tracking against the suggested posture.

    Falls back to holding the current posture if the solver returns a
    non-finite or infeasible plan.
    """
    limits = limits or JointLimits.default()
    q_now = np.asarray(q_now, dtype=float)
    q_star = np.asarray(q_star, dtype=float)
    H = cfg.horizon
    max_step = cfg.velocity_limit * task.dt
    goal = task.hand_goal
    hold = np.tile(q_now, (H, 1))
    x0 = hold if warm_start is None else np.clip(warm_start, limits.lower, limits.upper)

    def fun(x):
        value, grad = plan_cost(x.reshape(H, N_JOINTS), q_star, goal, task, cfg.alpha, dims)
        return value, grad.ravel()

    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = minimize(fun, x0.ravel(), jac=True, method="SLSQP",
                       bounds=limits.bounds * H, constraints=[_velocity_constraint(H, q_now, max_step)],
                       options={"maxiter": cfg.max_plan_iter, "ftol": 1e-10})
    X = res.x.reshape(H, N_JOINTS)
    if not np.all(np.isfinite(X)):
        log.warning("operator planner diverged; holding posture")
        return hold
    # SLSQP honours constraints to within its own tolerance; make them exact
    prev = q_now
    out = np.empty_like(X)
    for k in range(H):
        prev = np.clip(prev + np.clip(X[k] - prev, -max_step, max_step), limits.lower, limits.upper)
        out[k] = prev
    return out


# --- episodes ------------------------------------------------------------------------


def follower_error(task: TeleopTask, q, dims: BodyDimensions | None = None) -> tuple[HandPose, float]:
    hand = forward_kinematics(q, dims)
    follower = task.leader_to_follower.apply(hand)
    R, p = follower.rotation, follower.position
    err = float(weighted_pose_error(task.follower_goal, R, p, task.w_pos, task.w_ori))
    return follower, err


# Suggestions refine the current posture locally; restarts elsewhere in the
# box produce distant targets the operator keeps chasing.
SUGGESTION_GRAD_OPTIONS = GradientOptions(starts=1)


def suggest_posture(correction: str, q, ctx: TaskContext, model: SurrogateModel, seed: int,
                    grad_opts: GradientOptions | None, cem_opts: CEMOptions | None,
                    dims: BodyDimensions | None = None, limits: JointLimits | None = None,
                    radius: float | None = None) -> np.ndarray | None:
    """Postural correction keeping the current hand pose; None if nothing feasible was found.

    With ``radius`` set, both solvers search the joint box intersected with
    ``q +- radius``.
    """
    limits = limits or JointLimits.default()
    target = forward_kinematics(q, dims)
    constraint = PoseConstraint(target)
    try:
        if correction == "grad":
            opts = grad_opts or SUGGESTION_GRAD_OPTIONS
            opts = GradientOptions(**{**opts.__dict__, "seed": seed, "limits": limits, "radius": radius})
            return optimize_gradient(model, ctx, q, constraint, opts).q_star
        opts = cem_opts or CEMOptions()
        opts = CEMOptions(**{**opts.__dict__, "seed": seed, "limits": limits, "radius": radius})
        return optimize_cem(rula, ctx, q, constraint, opts, model, batch_fn=rula_batch).q_star
    except InfeasibleError:
        return None


def run_episode(task: TeleopTask, human_cfg: HumanModelConfig, model: SurrogateModel, ctx: TaskContext,
                correction: str = "none", seed: int = 0, grad_opts: GradientOptions | None = None,
                cem_opts: CEMOptions | None = None, limits: JointLimits | None = None,
                dims: BodyDimensions | None = None) -> SimulationTrace:
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    limits = limits or JointLimits.default()
    q = np.clip(task.start, limits.lower, limits.upper)
    plan, k_plan = None, 0
    suggestion = None
    steps = []
    completed_at = None
    for t in range(task.max_steps):
        follower, err = follower_error(task, q, dims)
        if correction != "none" and t % human_cfg.suggestion_period == 0:
            suggestion = suggest_posture(correction, q, ctx, model, int(make_rng(seed, 9, t).integers(2**31)),
                                         grad_opts, cem_opts, dims, limits, human_cfg.suggestion_radius)
        steps.append(StepRecord(
            t, q.copy(), None if suggestion is None else suggestion.copy(), rula_grand(q, ctx), model.score(q, ctx),
            None if suggestion is None else rula_grand(suggestion, ctx), follower, err,
        ))
        if err < task.tolerance:
            completed_at = t
            break
        if t == task.max_steps - 1:
            break
        if plan is None or k_plan >= len(plan) or t % human_cfg.replan_period == 0:
            target = q if suggestion is None else suggestion
            warm = None if plan is None else np.vstack([plan[k_plan:], np.tile(plan[-1], (k_plan, 1))])
            plan = human_plan(q, target, task, human_cfg, limits, dims, warm_start=warm)
            k_plan = 0
        q = plan[k_plan]
        k_plan += 1
    return SimulationTrace(steps, completed_at is not None, completed_at, correction, human_cfg.alpha, task.dt, seed)


def episode_metrics(trace: SimulationTrace) -> dict:
    executed = [s.rula for s in trace.steps]
    suggested = [s.suggested_rula for s in trace.steps if s.suggested_rula is not None]
    return {
        "completed": trace.completed,
        "completion_steps": trace.completion_step,
        "completion_time": None if trace.completion_step is None else trace.completion_step * trace.dt,
        "median_rula_executed": float(np.median(executed)) if executed else None,
        "median_rula_suggested": float(np.median(suggested)) if suggested else None,
        "suggested_undefined": not suggested,
        "rula_per_step": executed,
        "dula_per_step": [s.dula for s in trace.steps],
    }


# --- demo suite ----------------------------------------------------------------------

DEMO_CONTEXT = TaskContext(arm_load_kg=1.0, neck_angle_deg=15.0, legs_and_feet_supported=True)

# Awkward starting postures (degrees): bent trunk, raised arm, bent wrist.
_START_LOW = np.radians([15, -10, -20, 45, 10, -20, 20, -40, 10, -15])
_START_HIGH = np.radians([40, 10, 20, 100, 50, 30, 60, 40, 40, 15])


def demo_suite(n: int = 20, seed: int = 0, limits: JointLimits | None = None,
               dims: BodyDimensions | None = None, **task_kw) -> list[TeleopTask]:
    """Seeded reaching tasks: the goal is the follower pose of a nearby posture."""
    limits = limits or JointLimits.default()
    transform = default_leader_to_follower()
    tasks = []
    for i in range(n):
        rng = make_rng(seed, 10, i)
        start = rng.uniform(_START_LOW, _START_HIGH)
        goal_q = np.clip(start + rng.uniform(-0.6, 0.6, N_JOINTS), limits.lower, limits.upper)
        goal = transform.apply(forward_kinematics(goal_q, dims))
        tasks.append(TeleopTask(start, goal, transform, **task_kw))
    return tasks


def run_suite(tasks: Sequence[TeleopTask], human_cfg: HumanModelConfig, model: SurrogateModel,
              ctx: TaskContext = DEMO_CONTEXT, correction: str = "none", seed: int = 0,
              grad_opts: GradientOptions | None = None, cem_opts: CEMOptions | None = None) -> list[SimulationTrace]:
    return [run_episode(task, human_cfg, model, ctx, correction, seed + i, grad_opts, cem_opts)
            for i, task in enumerate(tasks)]


def report_rows(uncorrected: SimulationTrace, corrected: SimulationTrace) -> list[dict]:
    """Step-aligned RULA series: suggested, uncorrected and corrected postures."""
    n = max(len(uncorrected.steps), len(corrected.steps))
    rows = []
    for t in range(n):
        c = corrected.steps[t] if t < len(corrected.steps) else None
        u = uncorrected.steps[t] if t < len(uncorrected.steps) else None
        rows.append({
            "step": t,
            "time": round(t * corrected.dt, 9),
            "suggested_rula": "" if c is None or c.suggested_rula is None else c.suggested_rula,
            "uncorrected_rula": "" if u is None else u.rula,
            "corrected_rula": "" if c is None else c.rula,
        })
    return rows
