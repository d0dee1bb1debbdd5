import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dula.dataset import make_rng, sample_contexts, sample_postures
from dula.kinematics import JointLimits
from dula.rula import (
    CONTEXT_FIELDS,
    TABLE_A,
    TABLE_B,
    TABLE_C,
    TABLES_SHA256,
    LoadMode,
    TaskContext,
    force_load_score,
    lower_arm_score,
    neck_score,
    rula,
    rula_batch,
    rula_grand,
    tables_as_dict,
    tables_digest,
    trunk_score,
    upper_arm_score,
    wrist_score,
    wrist_twist_score,
)

LIMITS = JointLimits.default()

# Worksheet tables transcribed row by row (rows: upper arm / neck / score C).
WORKSHEET_A = [
    ["1 2 2 2 2 3 3 3", "2 2 2 2 3 3 3 3", "2 3 3 3 3 3 4 4"],
    ["2 3 3 3 3 4 4 4", "3 3 3 3 3 4 4 4", "3 4 4 4 4 4 5 5"],
    ["3 3 4 4 4 4 5 5", "3 4 4 4 4 4 5 5", "4 4 4 4 4 5 5 5"],
    ["4 4 4 4 4 5 5 5", "4 4 4 4 4 5 5 5", "4 4 4 5 5 5 6 6"],
    ["5 5 5 5 5 6 6 7", "5 6 6 6 6 7 7 7", "6 6 6 7 7 7 7 8"],
    ["7 7 7 7 7 8 8 9", "8 8 8 8 8 9 9 9", "9 9 9 9 9 9 9 9"],
]
WORKSHEET_B = [
    "1 3 2 3 3 4 5 5 6 6 7 7",
    "2 3 2 3 4 5 5 5 6 7 7 7",
    "3 3 3 4 4 5 5 6 6 7 7 7",
    "5 5 5 6 6 7 7 7 7 7 8 8",
    "7 7 7 7 7 8 8 8 8 8 8 8",
    "8 8 8 8 8 8 8 9 9 9 9 9",
]
WORKSHEET_C = [
    "1 2 3 3 4 5 5",
    "2 2 3 4 4 5 5",
    "3 3 3 4 4 5 6",
    "3 3 3 4 5 6 6",
    "4 4 4 5 6 7 7",
    "4 4 5 6 6 7 7",
    "5 5 6 6 7 7 7",
    "5 5 6 7 7 7 7",
]


def _ints(row):
    return [int(v) for v in row.split()]


def deg(**angles):
    q = np.zeros(10)
    names = ["trunk_flex", "trunk_lat", "trunk_axial", "sh_flex", "sh_abd", "sh_rot", "elbow", "pron", "wr_flex",
             "wr_dev"]
    for k, v in angles.items():
        q[names.index(k)] = np.radians(v)
    return q


def test_tables_match_worksheet_transcription():
    a = np.array([[_ints(r) for r in ua] for ua in WORKSHEET_A]).reshape(6, 3, 4, 2)
    np.testing.assert_array_equal(TABLE_A, a)
    np.testing.assert_array_equal(TABLE_B, np.array([_ints(r) for r in WORKSHEET_B]).reshape(6, 6, 2))
    np.testing.assert_array_equal(TABLE_C, np.array([_ints(r) for r in WORKSHEET_C]))


def test_table_shapes_and_ranges():
    assert TABLE_A.shape == (6, 3, 4, 2)
    assert TABLE_B.shape == (6, 6, 2)
    assert TABLE_C.shape == (8, 7)
    for table in (TABLE_A, TABLE_B):
        assert table.min() >= 1 and table.max() <= 9
    assert TABLE_C.min() >= 1 and TABLE_C.max() <= 7
    assert TABLE_C[0, 0] == 1 and TABLE_C[7, 6] == 7


@pytest.mark.parametrize("table", [TABLE_A, TABLE_B, TABLE_C], ids=["A", "B", "C"])
def test_tables_non_decreasing_along_every_axis(table):
    for axis in range(table.ndim):
        assert np.all(np.diff(table, axis=axis) >= 0)


def test_tables_are_read_only_and_checksummed():
    assert tables_digest() == TABLES_SHA256
    with pytest.raises(ValueError):
        TABLE_C[0, 0] = 3
    doc = tables_as_dict()
    assert doc["sha256"] == TABLES_SHA256
    np.testing.assert_array_equal(np.array(doc["table_c"]["values"]), TABLE_C)


def test_neutral_posture_light_task_scores_one():
    q = deg(elbow=80)
    ctx = TaskContext(neck_angle_deg=5.0)
    b = rula(q, ctx)
    assert (b.upper_arm, b.lower_arm, b.wrist, b.wrist_twist, b.neck, b.trunk, b.legs) == (1, 1, 1, 1, 1, 1, 1)
    assert b.grand == 1


def test_worked_example_by_hand():
    # upper arm 60 deg flexion (3) + abducted (4); elbow 110 (2); wrist 20 deg (3) + deviated (4);
    # pronation 70 (twist 2) -> Table A[4,2,4,2] = 5; static arm +1; 5 kg intermittent +1 -> C = 7
    # neck 15 (2); trunk 30 deg (3) + twisted (4); legs supported -> Table B[2,4,1] = 5; no extras -> D = 5
    q = deg(trunk_flex=30, trunk_axial=20, sh_flex=60, sh_abd=30, elbow=110, pron=70, wr_flex=20, wr_dev=15)
    ctx = TaskContext(arm_static_or_repeated=True, arm_load_kg=5.0, neck_angle_deg=15.0)
    b = rula(q, ctx)
    assert (b.upper_arm, b.lower_arm, b.wrist, b.wrist_twist) == (4, 2, 4, 2)
    assert b.table_a == 5 and b.score_c == 7
    assert (b.neck, b.trunk, b.legs, b.table_b, b.score_d) == (2, 4, 1, 5, 5)
    assert b.grand == TABLE_C[6, 4] == 7


@pytest.mark.parametrize("flexion, expected", [(-25, 2), (-20, 1), (0, 1), (19.9, 1), (20, 2), (44, 2), (45, 3),
                                               (89, 3), (90, 4), (150, 4)])
def test_upper_arm_bands(flexion, expected):
    assert upper_arm_score(deg(sh_flex=flexion), TaskContext()) == expected


def test_upper_arm_adjustments_and_clamp():
    ctx = TaskContext(shoulder_raised=True)
    assert upper_arm_score(deg(sh_flex=120, sh_abd=40), ctx) == 6
    assert upper_arm_score(deg(), TaskContext(arm_supported_or_leaning=True)) == 1


@pytest.mark.parametrize("elbow, expected", [(0, 2), (59, 2), (60, 1), (99, 1), (100, 2), (140, 2)])
def test_lower_arm_bands(elbow, expected):
    assert lower_arm_score(deg(elbow=elbow), TaskContext()) == expected
    assert lower_arm_score(deg(elbow=elbow), TaskContext(working_across_midline=True)) == expected + 1


@pytest.mark.parametrize("flex, dev, expected", [(0, 0, 1), (-4, 0, 1), (10, 0, 2), (-14, 0, 2), (15, 0, 3),
                                                 (-40, 0, 3), (0, 11, 2), (0, -11, 2), (20, 20, 4)])
def test_wrist_bands(flex, dev, expected):
    assert wrist_score(deg(wr_flex=flex, wr_dev=dev), TaskContext()) == expected


@pytest.mark.parametrize("pron, expected", [(0, 1), (60, 1), (61, 2), (-70, 2)])
def test_wrist_twist(pron, expected):
    assert wrist_twist_score(deg(pron=pron)) == expected


@pytest.mark.parametrize("neck, expected", [(-5, 4), (0, 1), (9, 1), (10, 2), (19, 2), (20, 3), (60, 3)])
def test_neck_bands(neck, expected):
    assert neck_score(TaskContext(neck_angle_deg=neck)) == expected


@pytest.mark.parametrize("flex, expected", [(0, 1), (-10, 2), (10, 2), (20, 3), (59, 3), (60, 4)])
def test_trunk_bands(flex, expected):
    assert trunk_score(deg(trunk_flex=flex), TaskContext()) == expected
    assert trunk_score(deg(trunk_flex=flex, trunk_axial=20, trunk_lat=-20), TaskContext()) == min(expected + 2, 6)


@pytest.mark.parametrize("load, mode, expected", [
    (1.9, LoadMode.STATIC_OR_REPEATED, 0), (2.0, LoadMode.INTERMITTENT, 1), (5.0, LoadMode.STATIC_OR_REPEATED, 2),
    (10.0, LoadMode.STATIC_OR_REPEATED, 2), (10.5, LoadMode.INTERMITTENT, 3), (0.5, LoadMode.SHOCK, 3),
])
def test_force_load_score(load, mode, expected):
    assert force_load_score(load, mode) == expected


def test_context_round_trips():
    ctx = TaskContext(arm_static_or_repeated=True, arm_load_kg=3.5, arm_load_mode=LoadMode.SHOCK, neck_angle_deg=-3.0,
                      neck_twist=True, legs_and_feet_supported=False, wrist_bent_from_midline=True)
    assert TaskContext.from_dict(ctx.to_dict()) == ctx
    assert TaskContext.from_array(ctx.to_array()) == ctx
    assert len(ctx.to_array()) == len(CONTEXT_FIELDS)


def test_context_rejects_negative_load():
    with pytest.raises(ValueError):
        TaskContext(arm_load_kg=-1.0)


def test_batch_agrees_with_scalar():
    rng = make_rng(11, 0)
    Q = sample_postures(rng, 3000, LIMITS)
    C = sample_contexts(rng, 3000)
    full = rula_batch(Q, C, full=True)
    for k in range(len(Q)):
        b = rula(Q[k], TaskContext.from_array(C[k]))
        for name, value in dataclasses.asdict(b).items():
            assert full[name][k] == value, (k, name)


# --- monotonicity -------------------------------------------------------------------

postures = st.lists(st.floats(-1.0, 1.0), min_size=10, max_size=10).map(
    lambda u: LIMITS.lower + (np.array(u) + 1.0) / 2.0 * (LIMITS.upper - LIMITS.lower))
contexts = st.builds(
    TaskContext,
    arm_static_or_repeated=st.booleans(), body_static_or_repeated=st.booleans(),
    arm_load_kg=st.floats(0, 15), arm_load_mode=st.sampled_from(list(LoadMode)),
    body_load_kg=st.floats(0, 15), body_load_mode=st.sampled_from(list(LoadMode)),
    neck_angle_deg=st.floats(-30, 45), neck_twist=st.booleans(), neck_side_bend=st.booleans(),
    legs_and_feet_supported=st.booleans(), arm_supported_or_leaning=st.booleans(), shoulder_raised=st.booleans(),
    working_across_midline=st.booleans(), wrist_bent_from_midline=st.booleans(),
)
RISK_FLAGS = ["arm_static_or_repeated", "body_static_or_repeated", "neck_twist", "neck_side_bend", "shoulder_raised",
              "working_across_midline", "wrist_bent_from_midline"]


@settings(max_examples=300, deadline=None)
@given(postures, contexts, st.floats(0, 15), st.sampled_from(["arm", "body"]))
def test_more_load_never_lowers_score(q, ctx, extra, side):
    field = f"{side}_load_kg"
    heavier = dataclasses.replace(ctx, **{field: getattr(ctx, field) + extra})
    assert rula_grand(q, heavier) >= rula_grand(q, ctx)


@settings(max_examples=300, deadline=None)
@given(postures, contexts, st.sampled_from(RISK_FLAGS))
def test_setting_a_risk_flag_never_lowers_score(q, ctx, flag):
    assert rula_grand(q, dataclasses.replace(ctx, **{flag: True})) >= rula_grand(q, dataclasses.replace(ctx, **{flag: False}))


@settings(max_examples=200, deadline=None)
@given(postures, contexts)
def test_support_flags_never_raise_score(q, ctx):
    supported = dataclasses.replace(ctx, legs_and_feet_supported=True, arm_supported_or_leaning=True)
    unsupported = dataclasses.replace(ctx, legs_and_feet_supported=False, arm_supported_or_leaning=False)
    assert rula_grand(q, supported) <= rula_grand(q, unsupported)


@settings(max_examples=200, deadline=None)
@given(postures, contexts)
def test_grand_in_range(q, ctx):
    assert 1 <= rula_grand(q, ctx) <= 7
