"""Posture/context dataset: sampling, quota balancing, stratified splits, storage.

Labels are always the exact RULA grand score of the stored sample; balancing
only changes which candidates are kept, never their labels.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .kinematics import JOINT_NAMES, N_JOINTS, JointLimits
from .rula import CONTEXT_FIELDS, CTX, TaskContext, rula_batch

log = logging.getLogger(__name__)

N_LABELS = 7
N_CONTEXT = len(CONTEXT_FIELDS)
LOAD_RANGE_KG = (0.0, 15.0)
NECK_SAMPLE_DEG = (-30.0, 45.0)
# Minimum-risk reference posture: every angle inside its lowest RULA band.
NEUTRAL_POSTURE = np.radians([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 80.0, 0.0, 0.0, 0.0])
NEUTRAL_NECK_DEG = 5.0

FILE_MAGIC = b"DULADATA"
FILE_VERSION = 1
RECORD_DTYPE = np.dtype([("posture", "<f8", (N_JOINTS,)), ("context", "<f8", (N_CONTEXT,)), ("label", "u1")])


class QuotaError(RuntimeError):
    def __init__(self, label: int, have: int, need: int, attempts: int):
        super().__init__(f"label {label} starved: {have}/{need} samples after {attempts} draws")
        self.label = label


@dataclass(frozen=True)
class DatasetSpec:
    total_count: int
    per_label_min_fraction: float = 1.0 / 14.0
    rng_seed: int = 0
    split_fraction: float = 0.8
    focus_fraction: float = 0.5
    max_attempts: int = 10**9
    chunk_size: int = 1 << 16

    def __post_init__(self):
        if self.total_count < 1:
            raise ValueError("total_count must be positive")
        if not 0.0 < self.per_label_min_fraction <= 1.0 / N_LABELS:
            raise ValueError("per_label_min_fraction must lie in (0, 1/7]")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if not 0.0 <= self.focus_fraction <= 1.0:
            raise ValueError("focus_fraction must lie in [0, 1]")

    @property
    def quota(self) -> int:
        # capped at total // 7 so a 1/7 fraction stays feasible for any total
        need = math.ceil(self.per_label_min_fraction * self.total_count - 1e-9)
        return min(need, self.total_count // N_LABELS)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LabeledSample:
    posture: np.ndarray
    context: TaskContext
    label: int


@dataclass
class Dataset:
    postures: np.ndarray  # (N, 10) radians
    contexts: np.ndarray  # (N, 14) columns in CONTEXT_FIELDS order
    labels: np.ndarray  # (N,) int64 in 1..7

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[LabeledSample]:
        for q, c, y in zip(self.postures, self.contexts, self.labels):
            yield LabeledSample(q.copy(), TaskContext.from_array(c), int(y))

    def subset(self, idx) -> Dataset:
        return Dataset(self.postures[idx], self.contexts[idx], self.labels[idx])

    def histogram(self) -> np.ndarray:
        """Counts per label 1..7."""
        return np.bincount(self.labels, minlength=N_LABELS + 1)[1:]

    @classmethod
    def concat(cls, parts) -> Dataset:
        parts = list(parts)
        return cls(
            np.concatenate([p.postures for p in parts]),
            np.concatenate([p.contexts for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )


def make_rng(seed, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# --- sampling ---------------------------------------------------------------------


def sample_postures(rng: np.random.Generator, n: int, limits: JointLimits | None = None) -> np.ndarray:
    limits = limits or JointLimits.default()
    return rng.uniform(limits.lower, limits.upper, size=(n, N_JOINTS))


def sample_posture(rng: np.random.Generator, limits: JointLimits | None = None) -> np.ndarray:
    return sample_postures(rng, 1, limits)[0]


def sample_contexts(rng: np.random.Generator, n: int) -> np.ndarray:
    """Context arrays: flags Bernoulli(0.5), loads U[0, 15] kg, modes uniform, neck U[-30, 45] deg."""
    C = (rng.random((n, N_CONTEXT)) < 0.5).astype(float)
    for name in ("arm_load_kg", "body_load_kg"):
        C[:, CTX[name]] = rng.uniform(*LOAD_RANGE_KG, size=n)
    for name in ("arm_load_mode", "body_load_mode"):
        C[:, CTX[name]] = rng.integers(0, 3, size=n)
    C[:, CTX["neck_angle_deg"]] = rng.uniform(*NECK_SAMPLE_DEG, size=n)
    return C


def sample_context(rng: np.random.Generator) -> TaskContext:
    return TaskContext.from_array(sample_contexts(rng, 1)[0])


def sample_focused(rng: np.random.Generator, n: int, limits: JointLimits | None = None):
    """Proposal that sweeps from the minimum-risk posture/context out to the full box.

    Each posture is ``neutral + s * (u - neutral)`` with ``u`` uniform in the
    limits and ``s ~ U(0, 1)``; the context is shrunk the same way by its own
    factor. Low labels (1, 2) are common under this proposal and practically
    unreachable under uniform sampling.
    """
    limits = limits or JointLimits.default()
    neutral = np.clip(NEUTRAL_POSTURE, limits.lower, limits.upper)
    s = rng.random((n, 1))
    Q = neutral + s * (sample_postures(rng, n, limits) - neutral)
    sc = rng.random(n)
    p_flag = 0.5 * sc
    C = (rng.random((n, N_CONTEXT)) < p_flag[:, None]).astype(float)
    legs = CTX["legs_and_feet_supported"]
    C[:, legs] = 1.0 - C[:, legs]
    for name in ("arm_load_kg", "body_load_kg"):
        C[:, CTX[name]] = rng.uniform(*LOAD_RANGE_KG, size=n) * sc
    for name in ("arm_load_mode", "body_load_mode"):
        modes = rng.integers(0, 3, size=n)
        C[:, CTX[name]] = np.where(rng.random(n) < sc, modes, 0)
    neck = rng.uniform(*NECK_SAMPLE_DEG, size=n)
    C[:, CTX["neck_angle_deg"]] = NEUTRAL_NECK_DEG + sc * (neck - NEUTRAL_NECK_DEG)
    return Q, C


def _proposal_chunk(rng, n, focus_fraction, limits):
    n_focus = int(rng.binomial(n, focus_fraction)) if 0.0 < focus_fraction < 1.0 else int(n * focus_fraction)
    Qu = sample_postures(rng, n - n_focus, limits)
    Cu = sample_contexts(rng, n - n_focus)
    Qf, Cf = sample_focused(rng, n_focus, limits)
    Q = np.concatenate([Qu, Qf])
    C = np.concatenate([Cu, Cf])
    order = rng.permutation(n)
    return Q[order], C[order]


def generate_unbalanced(n: int, seed: int, limits: JointLimits | None = None) -> Dataset:
    """Plain uniform sampling with exact labels, no balancing."""
    rng = make_rng(seed, 0)
    Q = sample_postures(rng, n, limits)
    C = sample_contexts(rng, n)
    return Dataset(Q, C, rula_batch(Q, C).astype(np.int64))


def _generate_shard(spec: DatasetSpec, limits: JointLimits, shard: int) -> Dataset:
    rng = make_rng(spec.rng_seed, shard)
    quota = spec.quota
    free = spec.total_count - N_LABELS * quota
    counts = np.zeros(N_LABELS + 1, dtype=np.int64)
    kept_q, kept_c, kept_y = [], [], []
    accepted = 0
    attempts = 0
    while accepted < spec.total_count:
        if attempts >= spec.max_attempts:
            starved = int(np.argmin(counts[1:])) + 1
            raise QuotaError(starved, int(counts[starved]), quota, attempts)
        n = int(min(spec.chunk_size, spec.max_attempts - attempts))
        Q, C = _proposal_chunk(rng, n, spec.focus_fraction, limits)
        y = rula_batch(Q, C)
        attempts += n
        keep = np.zeros(n, dtype=bool)
        # sequential quota bookkeeping; order within the chunk decides ties
        for i, label in enumerate(y):
            if counts[label] < quota:
                counts[label] += 1
            elif free > 0:
                free -= 1
            else:
                continue
            keep[i] = True
            accepted += 1
            if accepted == spec.total_count:
                break
        kept_q.append(Q[keep])
        kept_c.append(C[keep])
        kept_y.append(y[keep])
    log.debug("shard %d: %d draws for %d samples", shard, attempts, accepted)
    return Dataset(np.concatenate(kept_q), np.concatenate(kept_c), np.concatenate(kept_y).astype(np.int64))


def generate_balanced(spec: DatasetSpec, limits: JointLimits | None = None, shards: int = 1,
                      workers: int = 1) -> Dataset:
    """Exactly ``spec.total_count`` labelled samples, each label holding at least the quota.

    With ``shards > 1`` the count is split across shards seeded by
    ``(rng_seed, shard)``; each shard meets the quota fraction on its share and
    the merge is ordered by shard index, so the result does not depend on
    ``workers``.
    """
    limits = limits or JointLimits.default()
    if shards == 1:
        return _generate_shard(spec, limits, 0)
    base, extra = divmod(spec.total_count, shards)
    specs = [
        DatasetSpec(**{**spec.to_dict(), "total_count": base + (1 if i < extra else 0)})
        for i in range(shards)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_generate_shard, specs, [limits] * shards, range(shards)))
    else:
        parts = [_generate_shard(s, limits, i) for i, s in enumerate(specs)]
    return Dataset.concat(parts)


# --- splitting ----------------------------------------------------------------------


def split(dataset: Dataset, fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified, shuffled train/test split; each label is cut at round(fraction * n_label)."""
    rng = make_rng(seed, 1)
    train_idx, test_idx = [], []
    for label in range(1, N_LABELS + 1):
        idx = np.flatnonzero(dataset.labels == label)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(fraction * len(idx)))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train = np.concatenate(train_idx)
    test = np.concatenate(test_idx)
    return dataset.subset(train[rng.permutation(len(train))]), dataset.subset(test[rng.permutation(len(test))])


def stratified_folds(labels: np.ndarray, k: int, seed: int = 0) -> list[np.ndarray]:
    """Disjoint index folds covering every sample; per-label counts differ by at most one."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = make_rng(seed, 2)
    folds: list[list[np.ndarray]] = [[] for _ in range(k)]
    offset = 0
    for label in range(1, N_LABELS + 1):
        idx = np.flatnonzero(labels == label)
        idx = idx[rng.permutation(len(idx))]
        # rotate the starting fold so remainders spread across folds
        for j, chunk in enumerate(np.array_split(idx, k)):
            folds[(j + offset) % k].append(chunk)
        offset += len(idx) % k
    return [np.sort(np.concatenate(f)) for f in folds]


# --- storage ------------------------------------------------------------------------


def dataset_header(dataset: Dataset, extra: dict | None = None) -> dict:
    header = {
        "format": "dula-dataset",
        "version": FILE_VERSION,
        "count": len(dataset),
        "record": {
            "posture": {"names": list(JOINT_NAMES), "units": "rad", "dtype": "<f8"},
            "context": {"names": list(CONTEXT_FIELDS), "dtype": "<f8"},
            "label": {"dtype": "u1", "range": [1, N_LABELS]},
        },
        "label_counts": dataset.histogram().tolist(),
    }
    if extra:
        header.update(extra)
    return header


def dataset_to_bytes(dataset: Dataset, extra: dict | None = None) -> bytes:
    header = json.dumps(dataset_header(dataset, extra), sort_keys=True).encode()
    records = np.empty(len(dataset), dtype=RECORD_DTYPE)
    records["posture"] = dataset.postures
    records["context"] = dataset.contexts
    records["label"] = dataset.labels
    return FILE_MAGIC + len(header).to_bytes(8, "little") + header + records.tobytes()


def dataset_from_bytes(blob: bytes) -> tuple[Dataset, dict]:
    if not blob.startswith(FILE_MAGIC):
        raise ValueError("not a dula dataset file")
    n = int.from_bytes(blob[8:16], "little")
    header = json.loads(blob[16:16 + n])
    if header.get("version") != FILE_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('version')}")
    records = np.frombuffer(blob[16 + n:], dtype=RECORD_DTYPE)
    if len(records) != header["count"]:
        raise ValueError("record count does not match header")
    ds = Dataset(records["posture"].copy(), records["context"].copy(), records["label"].astype(np.int64))
    return ds, header


def load_dataset(path) -> tuple[Dataset, dict]:
    return dataset_from_bytes(Path(path).read_bytes())


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*JOINT_NAMES, *CONTEXT_FIELDS, "label"])
    for q, c, y in zip(dataset.postures, dataset.contexts, dataset.labels):
        writer.writerow([*map(repr, q.tolist()), *map(repr, c.tolist()), int(y)])
    return buf.getvalue()
