import time

import numpy as np
import pytest

from dula.dataset import (
    FILE_MAGIC,
    LOAD_RANGE_KG,
    N_LABELS,
    NECK_SAMPLE_DEG,
    DatasetSpec,
    QuotaError,
    dataset_from_bytes,
    dataset_to_bytes,
    dataset_to_csv,
    generate_balanced,
    generate_unbalanced,
    load_dataset,
    make_rng,
    sample_context,
    sample_contexts,
    sample_posture,
    sample_postures,
    split,
    stratified_folds,
)
from dula.kinematics import JointLimits
from dula.rula import CTX, LoadMode, TaskContext, rula_batch, rula_grand

LIMITS = JointLimits.default()


@pytest.fixture(scope="module")
def small_balanced():
    return generate_balanced(DatasetSpec(7000, per_label_min_fraction=1 / 14, rng_seed=3))


def test_postures_within_limits_and_seeded():
    a = sample_postures(make_rng(5), 2000, LIMITS)
    b = sample_postures(make_rng(5), 2000, LIMITS)
    np.testing.assert_array_equal(a, b)
    assert np.all(a >= LIMITS.lower) and np.all(a <= LIMITS.upper)
    assert LIMITS.contains(sample_posture(make_rng(6), LIMITS))


def test_posture_mean_matches_interval_midpoint():
    Q = sample_postures(make_rng(7), 100_000, LIMITS)
    mid = (LIMITS.lower + LIMITS.upper) / 2
    span = LIMITS.upper - LIMITS.lower
    assert np.all(np.abs(Q.mean(axis=0) - mid) < 0.02 * span)


def test_context_ranges_and_frequencies():
    C = sample_contexts(make_rng(8), 100_000)
    for name in ("arm_load_kg", "body_load_kg"):
        col = C[:, CTX[name]]
        assert col.min() >= LOAD_RANGE_KG[0] and col.max() <= LOAD_RANGE_KG[1]
        assert abs(col.mean() - 7.5) < 0.1
    neck = C[:, CTX["neck_angle_deg"]]
    assert neck.min() >= NECK_SAMPLE_DEG[0] and neck.max() <= NECK_SAMPLE_DEG[1]
    for name in ("neck_twist", "shoulder_raised", "legs_and_feet_supported", "wrist_bent_from_midline"):
        assert abs(C[:, CTX[name]].mean() - 0.5) < 0.01
    modes = np.bincount(C[:, CTX["arm_load_mode"]].astype(int), minlength=3) / len(C)
    np.testing.assert_allclose(modes, 1 / 3, atol=0.01)
    assert isinstance(sample_context(make_rng(9)), TaskContext)


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(100, per_label_min_fraction=0.2)
    with pytest.raises(ValueError):
        DatasetSpec(0)
    with pytest.raises(ValueError):
        DatasetSpec(100, split_fraction=1.0)


def test_quota_arithmetic():
    assert DatasetSpec(70_000, per_label_min_fraction=1 / 14).quota == 5000
    assert DatasetSpec(200_000, per_label_min_fraction=1 / 7).quota == 200_000 // 7


def test_balanced_generation_meets_quota(small_balanced):
    assert len(small_balanced) == 7000
    assert np.all(small_balanced.histogram() >= 500)


def test_seventy_thousand_quota_example():
    data = generate_balanced(DatasetSpec(70_000, per_label_min_fraction=1 / 14, rng_seed=1))
    assert len(data) == 70_000
    assert np.all(data.histogram() >= 5000)


def test_full_fraction_gives_equal_classes():
    data = generate_balanced(DatasetSpec(7 * 300, per_label_min_fraction=1 / 7, rng_seed=2))
    np.testing.assert_array_equal(data.histogram(), [300] * 7)


def test_labels_equal_scorer(small_balanced):
    np.testing.assert_array_equal(rula_batch(small_balanced.postures, small_balanced.contexts), small_balanced.labels)
    for sample in list(small_balanced)[:200]:
        assert rula_grand(sample.posture, sample.context) == sample.label


def test_generation_is_reproducible():
    spec = DatasetSpec(3000, rng_seed=11)
    assert dataset_to_bytes(generate_balanced(spec)) == dataset_to_bytes(generate_balanced(spec))


def test_sharded_generation_independent_of_workers():
    spec = DatasetSpec(2100, rng_seed=4)
    serial = generate_balanced(spec, shards=3, workers=1)
    parallel = generate_balanced(spec, shards=3, workers=2)
    assert dataset_to_bytes(serial) == dataset_to_bytes(parallel)
    assert len(serial) == 2100


def test_starved_label_raises_quota_error():
    # uniform proposals alone almost never reach label 1 within a few thousand draws
    spec = DatasetSpec(700, per_label_min_fraction=1 / 7, focus_fraction=0.0, max_attempts=2000, chunk_size=1000)
    with pytest.raises(QuotaError) as err:
        generate_balanced(spec)
    assert 1 <= err.value.label <= N_LABELS


def test_unbalanced_distribution_concentrates_in_high_labels():
    hist = generate_unbalanced(100_000, seed=0).histogram()
    share = hist / hist.sum()
    # labels 1 and 2 are essentially unreachable with independent uniform context draws
    assert share[:2].sum() < 0.001
    assert share[5:].sum() > 0.9


def test_split_is_stratified_disjoint_and_seeded(small_balanced):
    train, test = split(small_balanced, 0.8, seed=1)
    assert len(train) + len(test) == len(small_balanced)
    for label in range(1, N_LABELS + 1):
        n = int(np.sum(small_balanced.labels == label))
        assert abs(int(np.sum(train.labels == label)) - 0.8 * n) <= 1
    keys = lambda d: {r.tobytes() for r in np.hstack([d.postures, d.contexts])}  # noqa: E731
    assert not keys(train) & keys(test)
    again, _ = split(small_balanced, 0.8, seed=1)
    np.testing.assert_array_equal(train.postures, again.postures)


def test_folds_are_balanced_and_cover(small_balanced):
    folds = stratified_folds(small_balanced.labels, 5, seed=0)
    allidx = np.concatenate(folds)
    assert len(allidx) == len(small_balanced) == len(np.unique(allidx))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for label in range(1, N_LABELS + 1):
        per = [int(np.sum(small_balanced.labels[f] == label)) for f in folds]
        assert max(per) - min(per) <= 1


def test_binary_round_trip(small_balanced, tmp_path):
    blob = dataset_to_bytes(small_balanced, {"rng_seed": 3})
    assert blob.startswith(FILE_MAGIC)
    path = tmp_path / "d.dula"
    path.write_bytes(blob)
    back, header = load_dataset(path)
    assert header["rng_seed"] == 3 and header["count"] == len(small_balanced)
    np.testing.assert_array_equal(back.postures, small_balanced.postures)
    np.testing.assert_array_equal(back.contexts, small_balanced.contexts)
    np.testing.assert_array_equal(back.labels, small_balanced.labels)
    np.testing.assert_array_equal(rula_batch(back.postures, back.contexts), back.labels)


def test_corrupt_file_rejected(small_balanced):
    with pytest.raises(ValueError):
        dataset_from_bytes(b"NOTDULA!" + bytes(20))
    blob = dataset_to_bytes(small_balanced)
    with pytest.raises(ValueError):
        dataset_from_bytes(blob[:-5])


def test_csv_export_has_header_and_rows(small_balanced):
    sub = small_balanced.subset(np.arange(5))
    lines = dataset_to_csv(sub).splitlines()
    assert len(lines) == 6
    assert lines[0].split(",")[-1] == "label"
    row = lines[1].split(",")
    assert float(row[0]) == sub.postures[0, 0]
    assert int(row[-1]) == sub.labels[0]


def test_context_modes_are_valid_enum_values():
    C = sample_contexts(make_rng(1), 1000)
    assert set(np.unique(C[:, CTX["body_load_mode"]]).astype(int)) <= {m.value for m in LoadMode}


def test_labeling_throughput():
    t0 = time.perf_counter()
    rng = make_rng(0)
    Q = sample_postures(rng, 100_000, LIMITS)
    C = sample_contexts(rng, 100_000)
    rula_batch(Q, C)
    assert time.perf_counter() - t0 < 10.0
