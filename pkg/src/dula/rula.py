"""Table-driven RULA worksheet scoring.

Lookup tables are transcribed from the published RULA employee assessment
worksheet (McAtamney & Corlett, Applied Ergonomics 24(2), 1993): Table A
(upper arm x lower arm x wrist x wrist twist), Table B (neck x trunk x legs)
and Table C (score C x score D -> grand score). ``TABLES_SHA256`` pins the
transcription; ``tests/test_rula.py`` recomputes it.

Angle bands are half-open ``[low, high)`` with the highest band closed.
Two scoring paths exist: :func:`rula` works on one posture and returns the
full breakdown, :func:`rula_batch` is the vectorised path used for dataset
labelling. They are tested against each other.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .kinematics import as_posture

# fmt: off
# TABLE_A[upper_arm-1][lower_arm-1][wrist-1][wrist_twist-1]
TABLE_A = np.array([
    [[[1, 2], [2, 2], [2, 3], [3, 3]],
     [[2, 2], [2, 2], [3, 3], [3, 3]],
     [[2, 3], [3, 3], [3, 3], [4, 4]]],
    [[[2, 3], [3, 3], [3, 4], [4, 4]],
     [[3, 3], [3, 3], [3, 4], [4, 4]],
     [[3, 4], [4, 4], [4, 4], [5, 5]]],
    [[[3, 3], [4, 4], [4, 4], [5, 5]],
     [[3, 4], [4, 4], [4, 4], [5, 5]],
     [[4, 4], [4, 4], [4, 5], [5, 5]]],
    [[[4, 4], [4, 4], [4, 5], [5, 5]],
     [[4, 4], [4, 4], [4, 5], [5, 5]],
     [[4, 4], [4, 5], [5, 5], [6, 6]]],
    [[[5, 5], [5, 5], [5, 6], [6, 7]],
     [[5, 6], [6, 6], [6, 7], [7, 7]],
     [[6, 6], [6, 7], [7, 7], [7, 8]]],
    [[[7, 7], [7, 7], [7, 8], [8, 9]],
     [[8, 8], [8, 8], [8, 9], [9, 9]],
     [[9, 9], [9, 9], [9, 9], [9, 9]]],
], dtype=np.int64)

# TABLE_B[neck-1][trunk-1][legs-1]
TABLE_B = np.array([
    [[1, 3], [2, 3], [3, 4], [5, 5], [6, 6], [7, 7]],
    [[2, 3], [2, 3], [4, 5], [5, 5], [6, 7], [7, 7]],
    [[3, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 7]],
    [[5, 5], [5, 6], [6, 7], [7, 7], [7, 7], [8, 8]],
    [[7, 7], [7, 7], [7, 8], [8, 8], [8, 8], [8, 8]],
    [[8, 8], [8, 8], [8, 8], [8, 9], [9, 9], [9, 9]],
], dtype=np.int64)

# TABLE_C[min(score_c, 8)-1][min(score_d, 7)-1]
TABLE_C = np.array([
    [1, 2, 3, 3, 4, 5, 5],
    [2, 2, 3, 4, 4, 5, 5],
    [3, 3, 3, 4, 4, 5, 6],
    [3, 3, 3, 4, 5, 6, 6],
    [4, 4, 4, 5, 6, 7, 7],
    [4, 4, 5, 6, 6, 7, 7],
    [5, 5, 6, 6, 7, 7, 7],
    [5, 5, 6, 7, 7, 7, 7],
], dtype=np.int64)
# fmt: on

for _t in (TABLE_A, TABLE_B, TABLE_C):
    _t.setflags(write=False)

TABLES_SHA256 = "657eeec0921c58642e38b4fb3691c3c8ed8c7b66ace160c2c00cee9f16ca2799"


def tables_digest() -> str:
    h = hashlib.sha256()
    for t in (TABLE_A, TABLE_B, TABLE_C):
        h.update(str(t.shape).encode())
        h.update(t.astype("<i8").tobytes())
    return h.hexdigest()


def tables_as_dict() -> dict:
    return {
        "source": "RULA employee assessment worksheet, McAtamney & Corlett (1993)",
        "table_a": {"axes": ["upper_arm", "lower_arm", "wrist", "wrist_twist"], "values": TABLE_A.tolist()},
        "table_b": {"axes": ["neck", "trunk", "legs"], "values": TABLE_B.tolist()},
        "table_c": {"axes": ["score_c", "score_d"], "values": TABLE_C.tolist()},
        "sha256": tables_digest(),
    }


# Thresholds in degrees. The worksheet words the adjustments qualitatively;
# these are the fixed numeric readings used everywhere in this package.
SHOULDER_ABDUCTION_DEG = 20.0
WRIST_TWIST_DEG = 60.0
TRUNK_TWIST_DEG = 15.0
TRUNK_SIDE_BEND_DEG = 15.0
WRIST_DEVIATION_DEG = 10.0
NEUTRAL_TOLERANCE_DEG = 5.0  # |angle| below this counts as "neutral" / "upright"
LIGHT_LOAD_KG = 2.0
HEAVY_LOAD_KG = 10.0
NECK_RANGE_DEG = (-90.0, 90.0)


class LoadMode(enum.IntEnum):
    INTERMITTENT = 0
    STATIC_OR_REPEATED = 1
    SHOCK = 2


class ScoringError(RuntimeError):
    """A sub-score left its worksheet range; indicates a bug, not bad input."""


@dataclass(frozen=True)
class TaskContext:
    arm_static_or_repeated: bool = False
    body_static_or_repeated: bool = False
    arm_load_kg: float = 0.0
    arm_load_mode: LoadMode = LoadMode.INTERMITTENT
    body_load_kg: float = 0.0
    body_load_mode: LoadMode = LoadMode.INTERMITTENT
    neck_angle_deg: float = 5.0
    neck_twist: bool = False
    neck_side_bend: bool = False
    legs_and_feet_supported: bool = True
    arm_supported_or_leaning: bool = False
    shoulder_raised: bool = False
    working_across_midline: bool = False
    wrist_bent_from_midline: bool = False

    def __post_init__(self):
        for name in ("arm_load_kg", "body_load_kg"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        neck = float(self.neck_angle_deg)
        if not (NECK_RANGE_DEG[0] <= neck <= NECK_RANGE_DEG[1]):
            raise ValueError(f"neck_angle_deg must lie in {NECK_RANGE_DEG}, got {neck}")
        object.__setattr__(self, "neck_angle_deg", neck)
        object.__setattr__(self, "arm_load_mode", LoadMode(int(self.arm_load_mode)))
        object.__setattr__(self, "body_load_mode", LoadMode(int(self.body_load_mode)))
        for f in fields(self):
            if f.type == "bool":
                object.__setattr__(self, f.name, bool(getattr(self, f.name)))

    def to_array(self) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in CONTEXT_FIELDS])

    @classmethod
    def from_array(cls, arr) -> TaskContext:
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (len(CONTEXT_FIELDS),):
            raise ValueError(f"context array must have {len(CONTEXT_FIELDS)} entries")
        kwargs = {}
        for name, value in zip(CONTEXT_FIELDS, arr):
            kind = _FIELD_KIND[name]
            kwargs[name] = bool(value) if kind == "bool" else LoadMode(int(value)) if kind == "mode" else float(value)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["arm_load_mode"] = self.arm_load_mode.name.lower()
        doc["body_load_mode"] = self.body_load_mode.name.lower()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> TaskContext:
        doc = dict(doc)
        for key in ("arm_load_mode", "body_load_mode"):
            if isinstance(doc.get(key), str):
                doc[key] = LoadMode[doc[key].upper()]
        unknown = set(doc) - set(CONTEXT_FIELDS)
        if unknown:
            raise ValueError(f"unknown context fields: {sorted(unknown)}")
        return cls(**doc)


CONTEXT_FIELDS = tuple(f.name for f in fields(TaskContext))
_FIELD_KIND = {
    f.name: ("mode" if f.name.endswith("_mode") else "float" if f.name.endswith(("_kg", "_deg")) else "bool")
    for f in fields(TaskContext)
}
CTX = {name: i for i, name in enumerate(CONTEXT_FIELDS)}


@dataclass(frozen=True)
class RulaBreakdown:
    upper_arm: int
    lower_arm: int
    wrist: int
    wrist_twist: int
    table_a: int
    muscle_a: int
    force_a: int
    score_c: int
    neck: int
    trunk: int
    legs: int
    table_b: int
    muscle_b: int
    force_b: int
    score_d: int
    grand: int

    def to_dict(self) -> dict:
        return asdict(self)


# --- sub-scores on a single posture ---------------------------------------------


def _clamp(v: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, v))


def _deg(q) -> np.ndarray:
    return to_degrees(as_posture(q))


def to_degrees(q: np.ndarray) -> np.ndarray:
    # rounding keeps band edges stable under radians<->degrees round trips
    return np.round(np.degrees(q), 9)


def upper_arm_score(q, ctx: TaskContext) -> int:
    a = _deg(q)
    flexion, abduction = a[3], a[4]
    if -20.0 <= flexion < 20.0:
        score = 1
    elif flexion < 45.0:
        score = 2  # below -20 (extension) or 20..45
    elif flexion < 90.0:
        score = 3
    else:
        score = 4
    score += int(ctx.shoulder_raised)
    score += int(abduction > SHOULDER_ABDUCTION_DEG)
    score -= int(ctx.arm_supported_or_leaning)
    return _clamp(score, 1, 6)


def lower_arm_score(q, ctx: TaskContext) -> int:
    elbow = _deg(q)[6]
    score = 1 if 60.0 <= elbow < 100.0 else 2
    score += int(ctx.working_across_midline)
    return _clamp(score, 1, 3)


def wrist_score(q, ctx: TaskContext) -> int:
    a = _deg(q)
    flexion = abs(a[8])
    if flexion < NEUTRAL_TOLERANCE_DEG:
        score = 1
    elif flexion < 15.0:
        score = 2
    else:
        score = 3
    bent = abs(a[9]) > WRIST_DEVIATION_DEG or ctx.wrist_bent_from_midline
    return _clamp(score + int(bent), 1, 4)


def wrist_twist_score(q) -> int:
    return 2 if abs(_deg(q)[7]) > WRIST_TWIST_DEG else 1


def neck_score(ctx: TaskContext) -> int:
    angle = ctx.neck_angle_deg
    if angle < 0.0:
        score = 4
    elif angle < 10.0:
        score = 1
    elif angle < 20.0:
        score = 2
    else:
        score = 3
    score += int(ctx.neck_twist) + int(ctx.neck_side_bend)
    return _clamp(score, 1, 6)


def trunk_score(q, ctx: TaskContext) -> int:
    # ctx is unused by the bands themselves; kept for a uniform sub-score signature.
    a = _deg(q)
    flexion = a[0]
    if abs(flexion) < NEUTRAL_TOLERANCE_DEG:
        score = 1
    elif flexion < 20.0:
        score = 2  # 5..20 deg flexion, or extension
    elif flexion < 60.0:
        score = 3
    else:
        score = 4
    score += int(abs(a[2]) > TRUNK_TWIST_DEG)
    score += int(abs(a[1]) > TRUNK_SIDE_BEND_DEG)
    return _clamp(score, 1, 6)


def legs_score(ctx: TaskContext) -> int:
    return 1 if ctx.legs_and_feet_supported else 2


def muscle_use_score(static_or_repeated: bool) -> int:
    return 1 if static_or_repeated else 0


def force_load_score(load_kg: float, mode: LoadMode) -> int:
    mode = LoadMode(int(mode))
    if mode == LoadMode.SHOCK or load_kg > HEAVY_LOAD_KG:
        return 3
    if load_kg < LIGHT_LOAD_KG:
        return 0
    return 1 if mode == LoadMode.INTERMITTENT else 2


def rula(q, ctx: TaskContext) -> RulaBreakdown:
    """Full worksheet evaluation for one posture and task context."""
    ua = upper_arm_score(q, ctx)
    la = lower_arm_score(q, ctx)
    wr = wrist_score(q, ctx)
    wt = wrist_twist_score(q)
    nk = neck_score(ctx)
    tr = trunk_score(q, ctx)
    lg = legs_score(ctx)
    ranges = {"upper_arm": (ua, 6), "lower_arm": (la, 3), "wrist": (wr, 4), "wrist_twist": (wt, 2),
              "neck": (nk, 6), "trunk": (tr, 6), "legs": (lg, 2)}
    for name, (value, hi) in ranges.items():
        if not 1 <= value <= hi:
            raise ScoringError(f"{name} score {value} outside 1..{hi}")
    table_a = int(TABLE_A[ua - 1, la - 1, wr - 1, wt - 1])
    table_b = int(TABLE_B[nk - 1, tr - 1, lg - 1])
    muscle_a = muscle_use_score(ctx.arm_static_or_repeated)
    muscle_b = muscle_use_score(ctx.body_static_or_repeated)
    force_a = force_load_score(ctx.arm_load_kg, ctx.arm_load_mode)
    force_b = force_load_score(ctx.body_load_kg, ctx.body_load_mode)
    score_c = table_a + muscle_a + force_a
    score_d = table_b + muscle_b + force_b
    grand = int(TABLE_C[min(score_c, 8) - 1, min(score_d, 7) - 1])
    return RulaBreakdown(ua, la, wr, wt, table_a, muscle_a, force_a, score_c,
                         nk, tr, lg, table_b, muscle_b, force_b, score_d, grand)


def rula_grand(q, ctx: TaskContext) -> int:
    return rula(q, ctx).grand


# --- vectorised path -------------------------------------------------------------


def force_load_scores(load_kg: np.ndarray, mode: np.ndarray) -> np.ndarray:
    load_kg = np.asarray(load_kg, dtype=float)
    mode = np.asarray(mode).astype(np.int64)
    score = np.where(mode == LoadMode.INTERMITTENT, 1, 2)
    score = np.where(load_kg < LIGHT_LOAD_KG, 0, score)
    return np.where((mode == LoadMode.SHOCK) | (load_kg > HEAVY_LOAD_KG), 3, score)


def rula_batch(Q: np.ndarray, C: np.ndarray, full: bool = False):
    """Grand scores for N postures (N, 10) with context arrays (N, 14).

    Context columns follow ``CONTEXT_FIELDS``. With ``full=True`` a dict of
    every intermediate score array is returned instead.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    C = np.broadcast_to(C, (Q.shape[0], C.shape[1]))
    a = to_degrees(Q)
    flag = lambda name: (C[:, CTX[name]] != 0).astype(np.int64)  # noqa: E731

    flex = a[:, 3]
    ua = np.select([(flex >= -20.0) & (flex < 20.0), flex < 45.0, flex < 90.0], [1, 2, 3], 4)
    ua = ua + flag("shoulder_raised") + (a[:, 4] > SHOULDER_ABDUCTION_DEG) - flag("arm_supported_or_leaning")
    ua = np.clip(ua, 1, 6)

    la = np.where((a[:, 6] >= 60.0) & (a[:, 6] < 100.0), 1, 2) + flag("working_across_midline")
    la = np.clip(la, 1, 3)

    wf = np.abs(a[:, 8])
    wr = np.select([wf < NEUTRAL_TOLERANCE_DEG, wf < 15.0], [1, 2], 3)
    wr = wr + ((np.abs(a[:, 9]) > WRIST_DEVIATION_DEG) | (flag("wrist_bent_from_midline") == 1))
    wr = np.clip(wr, 1, 4)

    wt = np.where(np.abs(a[:, 7]) > WRIST_TWIST_DEG, 2, 1)

    neck_angle = C[:, CTX["neck_angle_deg"]]
    nk = np.select([neck_angle < 0.0, neck_angle < 10.0, neck_angle < 20.0], [4, 1, 2], 3)
    nk = np.clip(nk + flag("neck_twist") + flag("neck_side_bend"), 1, 6)

    tf = a[:, 0]
    tr = np.select([np.abs(tf) < NEUTRAL_TOLERANCE_DEG, tf < 20.0, tf < 60.0], [1, 2, 3], 4)
    tr = tr + (np.abs(a[:, 2]) > TRUNK_TWIST_DEG) + (np.abs(a[:, 1]) > TRUNK_SIDE_BEND_DEG)
    tr = np.clip(tr, 1, 6)

    lg = 2 - flag("legs_and_feet_supported")

    table_a = TABLE_A[ua - 1, la - 1, wr - 1, wt - 1]
    table_b = TABLE_B[nk - 1, tr - 1, lg - 1]
    muscle_a = flag("arm_static_or_repeated")
    muscle_b = flag("body_static_or_repeated")
    force_a = force_load_scores(C[:, CTX["arm_load_kg"]], C[:, CTX["arm_load_mode"]])
    force_b = force_load_scores(C[:, CTX["body_load_kg"]], C[:, CTX["body_load_mode"]])
    score_c = table_a + muscle_a + force_a
    score_d = table_b + muscle_b + force_b
    grand = TABLE_C[np.minimum(score_c, 8) - 1, np.minimum(score_d, 7) - 1]
    if not full:
        return grand
    return {
        "upper_arm": ua, "lower_arm": la, "wrist": wr, "wrist_twist": wt,
        "table_a": table_a, "muscle_a": muscle_a, "force_a": force_a, "score_c": score_c,
        "neck": nk, "trunk": tr, "legs": lg, "table_b": table_b,
        "muscle_b": muscle_b, "force_b": force_b, "score_d": score_d, "grand": grand,
    }
