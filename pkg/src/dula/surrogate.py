"""DULA: a fully-connected ReLU regressor of the RULA grand score.

The network maps a 22-dim feature vector (normalised joint angles plus task
context) through hidden layers 124-124-124-7 to one unbounded real output.
Forward and backward passes are written out by hand so the input gradient
is exact and cheap; clamping to [1, 7] happens only when reporting.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import N_LABELS, Dataset, make_rng, stratified_folds
from .kinematics import N_JOINTS, JointLimits
from .rula import CTX, NECK_RANGE_DEG, TaskContext, force_load_scores

log = logging.getLogger(__name__)

HIDDEN = (124, 124, 124, 7)
CHECKPOINT_FORMAT = "dula-checkpoint"
CHECKPOINT_VERSION = 1

FEATURE_NAMES = (
    "torso_flexion", "torso_lateral_bend", "torso_axial_rotation",
    "shoulder_flexion", "shoulder_abduction", "shoulder_rotation",
    "elbow_flexion", "forearm_pronation", "wrist_flexion", "wrist_deviation",
    "arm_static_or_repeated", "arm_force_score", "body_static_or_repeated", "body_force_score",
    "neck_angle", "neck_twist", "neck_side_bend", "legs_and_feet_supported",
    "arm_supported_or_leaning", "shoulder_raised", "working_across_midline", "wrist_bent_from_midline",
)
N_FEATURES = len(FEATURE_NAMES)
_FLAG_FEATURES = {
    10: "arm_static_or_repeated", 12: "body_static_or_repeated", 15: "neck_twist", 16: "neck_side_bend",
    17: "legs_and_feet_supported", 18: "arm_supported_or_leaning", 19: "shoulder_raised",
    20: "working_across_midline", 21: "wrist_bent_from_midline",
}


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


# --- features -----------------------------------------------------------------------


def featurize_batch(Q: np.ndarray, C: np.ndarray, limits: JointLimits,
                    neck_range=NECK_RANGE_DEG) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    C = np.broadcast_to(np.atleast_2d(np.asarray(C, dtype=float)), (Q.shape[0], len(CTX)))
    F = np.empty((Q.shape[0], N_FEATURES))
    F[:, :N_JOINTS] = 2.0 * (Q - limits.lower) / (limits.upper - limits.lower) - 1.0
    for col, name in _FLAG_FEATURES.items():
        F[:, col] = (C[:, CTX[name]] != 0).astype(float)
    F[:, 11] = force_load_scores(C[:, CTX["arm_load_kg"]], C[:, CTX["arm_load_mode"]]) / 3.0
    F[:, 13] = force_load_scores(C[:, CTX["body_load_kg"]], C[:, CTX["body_load_mode"]]) / 3.0
    lo, hi = neck_range
    F[:, 14] = 2.0 * (C[:, CTX["neck_angle_deg"]] - lo) / (hi - lo) - 1.0
    return F


def featurize(q, ctx: TaskContext, limits: JointLimits, neck_range=NECK_RANGE_DEG) -> np.ndarray:
    return featurize_batch(np.asarray(q, dtype=float)[None], ctx.to_array()[None], limits, neck_range)[0]


def defeaturize_posture(fv, limits: JointLimits) -> np.ndarray:
    fv = np.asarray(fv, dtype=float)
    return limits.lower + (fv[..., :N_JOINTS] + 1.0) * 0.5 * (limits.upper - limits.lower)


# --- model --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 0.001
    batch_size: int = 1024
    k_folds: int = 5
    rng_seed: int = 0
    optimizer: str = "sgd"  # sgd | momentum | adam
    momentum: float = 0.9
    lr_schedule: str = "constant"  # constant | cosine
    divergence_loss: float = 1e6

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.k_folds < 1:
            raise ValueError("epochs must be >= 0 and batch_size, k_folds >= 1")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SurrogateModel:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list
    limits: JointLimits = field(default_factory=JointLimits.default)
    neck_range: tuple = NECK_RANGE_DEG
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input width does not chain with layer {i - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        if self.weights[0].shape[0] != N_FEATURES or self.weights[-1].shape[1] != 1:
            raise ValueError("model must map 22 features to one output")

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def initialize(cls, seed: int = 0, limits: JointLimits | None = None, hidden=HIDDEN) -> SurrogateModel:
        """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
        rng = make_rng(seed, 3)
        dims = [N_FEATURES, *hidden, 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32).astype(float))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, limits or JointLimits.default())

    @classmethod
    def zeros(cls, output_bias: float = 0.0, hidden=HIDDEN) -> SurrogateModel:
        dims = [N_FEATURES, *hidden, 1]
        weights = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) for b in dims[1:]]
        biases[-1][0] = output_bias
        return cls(weights, biases)

    # forward / backward -------------------------------------------------------

    def predict(self, F) -> np.ndarray:
        """Raw network output for a batch of feature vectors (N, 22); unclamped."""
        h = np.atleast_2d(np.asarray(F, dtype=float))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def predict_one(self, fv) -> float:
        return float(self.predict(np.asarray(fv, dtype=float)[None])[0])

    def preactivations(self, fv) -> list[np.ndarray]:
        h = np.asarray(fv, dtype=float)
        pre = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0)
        return pre

    def value_and_input_gradient(self, fv) -> tuple[float, np.ndarray]:
        """Output and its exact gradient w.r.t. the 22 features (ReLU'(0) := 0)."""
        h = np.asarray(fv, dtype=float)
        masks = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            m = z > 0.0
            masks.append(m)
            h = np.where(m, z, 0.0)
        out = float(h @ self.weights[-1][:, 0] + self.biases[-1][0])
        g = self.weights[-1][:, 0]
        for w, m in zip(reversed(self.weights[:-1]), reversed(masks)):
            g = w @ (g * m)
        return out, g

    def input_gradient(self, fv) -> np.ndarray:
        return self.value_and_input_gradient(fv)[1]

    def posture_value_and_gradient(self, q, ctx: TaskContext) -> tuple[float, np.ndarray]:
        """DULA score and d(score)/dq in radians, chained through the angle normalisation."""
        fv = featurize(q, ctx, self.limits, self.neck_range)
        value, g = self.value_and_input_gradient(fv)
        return value, g[:N_JOINTS] * (2.0 / (self.limits.upper - self.limits.lower))

    def score(self, q, ctx: TaskContext) -> float:
        return self.predict_one(featurize(q, ctx, self.limits, self.neck_range))

    def predict_dataset(self, data: Dataset) -> np.ndarray:
        return self.predict(featurize_batch(data.postures, data.contexts, self.limits, self.neck_range))

    def lipschitz_bound(self) -> float:
        """Product of layer spectral norms: an upper bound on the L2 Lipschitz constant."""
        return float(np.prod([np.linalg.norm(w, 2) for w in self.weights]))

    # persistence --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_dims": self.widths,
            "activation": {"hidden": "relu", "output": "identity"},
            "weight_layout": "row-major (fan_in, fan_out)",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "features": list(FEATURE_NAMES),
            "normalization": {
                "joint_lower": self.limits.lower.tolist(),
                "joint_upper": self.limits.upper.tolist(),
                "neck_range_deg": list(self.neck_range),
            },
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SurrogateModel:
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a supported DULA checkpoint")
        norm = doc["normalization"]
        model = cls(
            doc["weights"], doc["biases"],
            JointLimits(norm["joint_lower"], norm["joint_upper"]),
            tuple(norm["neck_range_deg"]), doc.get("meta", {}),
        )
        if model.widths != doc["layer_dims"]:
            raise ValueError("layer_dims do not match the stored weights")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> SurrogateModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_checkpoint_path() -> Path:
    return Path(__file__).parent / "data" / "dula_desk.json"


def load_default_model() -> SurrogateModel:
    return SurrogateModel.load(default_checkpoint_path())


# --- training -----------------------------------------------------------------------


def _forward_train(params, X):
    acts = [X]
    h = X
    n = len(params) // 2
    for i in range(n):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _backward_train(params, acts, dout):
    n = len(params) // 2
    grads = [None] * len(params)
    g = dout
    for i in reversed(range(n)):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i:
            g = (g @ params[2 * i].T) * (acts[i] > 0.0)
    return grads


def _stepper(cfg: TrainConfig, params):
    state = [np.zeros_like(p) for p in params]
    state2 = [np.zeros_like(p) for p in params]
    t = 0

    def step(grads, lr):
        nonlocal t
        t += 1
        for p, g, m, v in zip(params, grads, state, state2):
            if cfg.optimizer == "sgd":
                p -= lr * g
            elif cfg.optimizer == "momentum":
                m *= cfg.momentum
                m += g
                p -= lr * m
            else:
                m *= 0.9
                m += 0.1 * g
                v *= 0.999
                v += 0.001 * g * g
                mhat = m / (1.0 - 0.9**t)
                vhat = v / (1.0 - 0.999**t)
                p -= lr * mhat / (np.sqrt(vhat) + 1e-8)

    return step


def _run_epochs(config, params, X, y, rng, progress):
    step = _stepper(config, params)
    n = len(y)
    history = []
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            lr = 0.5 * config.learning_rate * (1.0 + np.cos(np.pi * epoch / config.epochs))
        else:
            lr = config.learning_rate
        lr = np.float32(lr)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            acts = _forward_train(params, X[idx])
            err = acts[-1] - y[idx]
            total += float(np.dot(err[:, 0], err[:, 0]))
            grads = _backward_train(params, acts, (2.0 / len(idx)) * err)
            step(grads, lr)
        loss = total / n
        history.append(loss)
        if not np.isfinite(loss) or loss > config.divergence_loss:
            raise TrainingError(epoch, loss)
        if progress:
            progress(epoch, loss)
    return history


def train(train_set: Dataset, config: TrainConfig, init: SurrogateModel | None = None,
          limits: JointLimits | None = None, progress=None) -> tuple[SurrogateModel, dict]:
    """Minibatch training on mean squared error against the integer labels.

    Arithmetic runs in float32; the returned model holds the float32 values
    widened to float64, so a saved checkpoint reproduces them exactly.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    limits = limits or (init.limits if init else JointLimits.default())
    model = init or SurrogateModel.initialize(config.rng_seed, limits)
    X = featurize_batch(train_set.postures, train_set.contexts, limits, model.neck_range).astype(np.float32)
    y = train_set.labels.astype(np.float32)[:, None]
    params = []
    for w, b in zip(model.weights, model.biases):
        params += [w.astype(np.float32), b.astype(np.float32)]
    rng = make_rng(config.rng_seed, 4)
    n = len(y)
    t0 = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        history = _run_epochs(config, params, X, y, rng, progress)
    trained = SurrogateModel(
        [p.astype(float) for p in params[0::2]], [p.astype(float) for p in params[1::2]],
        limits, model.neck_range,
        {"train_config": config.to_dict(), "config_hash": config.digest(), "train_count": n},
    )
    metrics = {"loss_history": history, "final_loss": history[-1] if history else None,
               "seconds": time.perf_counter() - t0}
    return trained, metrics


# --- evaluation ---------------------------------------------------------------------


def report_scores(raw: np.ndarray) -> np.ndarray:
    """Clamp to [1, 7] and round to the nearest integer (halves away from zero)."""
    return np.floor(np.clip(raw, 1.0, 7.0) + 0.5).astype(np.int64)


def accuracy(model: SurrogateModel, data: Dataset) -> float:
    return float(np.mean(report_scores(model.predict_dataset(data)) == data.labels))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true RULA 1..7, cols: rounded DULA 1..7

    @property
    def per_class_accuracy(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        return np.where(rows > 0, np.diag(self.counts) / np.maximum(rows, 1), np.nan)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    @property
    def min_diagonal(self) -> float:
        return float(np.nanmin(self.per_class_accuracy))

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "per_class_accuracy": self.per_class_accuracy.tolist(),
                "accuracy": self.accuracy, "min_diagonal": self.min_diagonal}

    def format(self) -> str:
        pct = 100.0 * self.counts / np.maximum(self.counts.sum(axis=1, keepdims=True), 1)
        lines = ["true\\pred " + " ".join(f"{j:>7d}" for j in range(1, N_LABELS + 1))]
        for i in range(N_LABELS):
            lines.append(f"{i + 1:>9d} " + " ".join(f"{v:7.2f}" for v in pct[i]))
        lines.append(f"accuracy {100 * self.accuracy:.2f}%  min diagonal {100 * self.min_diagonal:.2f}%")
        return "\n".join(lines)


def confusion_matrix(model: SurrogateModel, test_set: Dataset) -> ConfusionMatrix:
    pred = report_scores(model.predict_dataset(test_set))
    counts = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    np.add.at(counts, (test_set.labels - 1, pred - 1), 1)
    return ConfusionMatrix(counts)


def cross_validate(dataset: Dataset, config: TrainConfig) -> dict:
    """k stratified folds; rounded accuracy of each held-out fold."""
    folds = stratified_folds(dataset.labels, config.k_folds, config.rng_seed)
    scores = []
    for i, held in enumerate(folds):
        rest = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        model, _ = train(dataset.subset(rest), config)
        scores.append(accuracy(model, dataset.subset(held)))
        log.info("fold %d/%d accuracy %.4f", i + 1, len(folds), scores[-1])
    return {"fold_accuracy": scores, "fold_sizes": [len(f) for f in folds],
            "mean": float(np.mean(scores)), "std": float(np.std(scores))}


# --- gradient check -----------------------------------------------------------------


def random_features(rng: np.random.Generator, n: int) -> np.ndarray:
    """Feature vectors on the valid grid: angles/neck continuous, flags and force scores discrete."""
    F = rng.uniform(-1.0, 1.0, size=(n, N_FEATURES))
    for col in _FLAG_FEATURES:
        F[:, col] = rng.integers(0, 2, size=n)
    for col in (11, 13):
        F[:, col] = rng.integers(0, 4, size=n) / 3.0
    return F


def grad_check(model: SurrogateModel, n: int = 500, h: float = 1e-5, seed: int = 0,
               kink_margin: float = 1e-6) -> dict:
    """Compare reverse-mode input gradients to central differences.

    A point is skipped when a pre-activation lies within ``kink_margin`` of
    zero or any stencil evaluation changes the ReLU activation pattern, i.e.
    the difference quotient straddles a kink.
    """
    rng = make_rng(seed, 5)
    F = random_features(rng, n)
    rel_errors, skipped = [], 0
    for fv in F:
        pre = model.preactivations(fv)
        base = [z > 0.0 for z in pre]
        _, g = model.value_and_input_gradient(fv)
        fd = np.empty(N_FEATURES)
        crosses = any(np.min(np.abs(z)) < kink_margin for z in pre)
        for i in range(N_FEATURES):
            e = np.zeros(N_FEATURES)
            e[i] = h
            for pt in (fv + e, fv - e):
                if any(np.any((z > 0.0) != m) for z, m in zip(model.preactivations(pt), base)):
                    crosses = True
            fd[i] = (model.predict_one(fv + e) - model.predict_one(fv - e)) / (2.0 * h)
        if crosses:
            skipped += 1
            continue
        scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
        rel_errors.append(float(np.linalg.norm(g - fd) / scale))
    rel = np.array(rel_errors)
    return {"checked": len(rel), "skipped_near_kink": skipped,
            "max_rel_error": float(rel.max()) if len(rel) else 0.0,
            "median_rel_error": float(np.median(rel)) if len(rel) else 0.0}
