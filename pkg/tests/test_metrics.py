import numpy as np
import pytest

import oracles
from anomforge import (
    BinaryMask3D,
    DegenerateGroundTruthError,
    ExcludedSample,
    SampleScore,
    Volume3D,
    aggregate,
    average_precision,
    binarize_gt,
    fpr_at_max_dice,
    max_dice,
    pixel_auc,
    score_sample,
)


def _case(scores, labels):
    """Wrap flat score/label lists as (map, gt, full mask) volumes."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    dims = (scores.size, 1, 1)
    map_ = Volume3D(scores.reshape(dims))
    gt = BinaryMask3D(labels.reshape(dims))
    mask = BinaryMask3D(np.ones(dims, dtype=bool))
    return map_, gt, mask


def _grid(scores, n=256):
    grid = np.linspace(0.0, 1.0, n)
    distinct = np.unique(scores)
    if distinct.size <= 4096:
        grid = np.union1d(grid, distinct)
    return grid


def test_auc_hand_cases():
    m, g, k = _case([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert pixel_auc(m, g, k) == 1.0
    m, g, k = _case([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])
    assert pixel_auc(m, g, k) == 0.0
    m, g, k = _case([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0])
    assert pixel_auc(m, g, k) == 0.5
    m, g, k = _case([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    assert pixel_auc(m, g, k) == 0.75


def test_ap_hand_case():
    # groups: theta=1 -> P=1 at R=1/2; theta=0.5 -> P=2/3 at R=1
    m, g, k = _case([1.0, 0.5, 0.5, 0.0], [1, 1, 0, 0])
    assert average_precision(m, g, k) == pytest.approx(0.5 * 1.0 + 0.5 * 2 / 3)
    m, g, k = _case([0.9, 0.8, 0.2], [1, 1, 0])
    assert average_precision(m, g, k) == 1.0


def test_max_dice_hand_cases():
    # all-zero map: every binarization is empty, dice 0 at the lowest theta
    m, g, k = _case([0.0, 0.0, 0.0], [1, 0, 0])
    dice, theta = max_dice(m, g, k)
    assert dice == 0.0
    assert theta == 0.0
    # perfect map: dice 1 at the lowest theta that keeps only positives
    m, g, k = _case([0.8, 0.6, 0.4, 0.2], [1, 1, 0, 0])
    dice, theta = max_dice(m, g, k)
    assert dice == 1.0
    assert theta == 0.4
    assert fpr_at_max_dice(m, g, k) == 0.0


def test_fpr_uses_best_threshold():
    # a negative (0.6) outranks a positive (0.3): best dice keeps it as a
    # false positive rather than dropping the weak true positive
    m, g, k = _case([0.8, 0.3, 0.6, 0.2], [1, 1, 0, 0])
    dice, theta = max_dice(m, g, k)
    assert dice == pytest.approx(4 / 5)
    assert theta == 0.2
    assert fpr_at_max_dice(m, g, k) == 0.5


def test_binarize_gt_inclusive():
    vol = Volume3D(np.array([[[0.49, 0.5, 0.51]]]))
    assert binarize_gt(vol).bits.tolist() == [[[False, True, True]]]
    assert binarize_gt(vol, threshold=0.51).count == 1


def test_degenerate_ground_truth():
    m, g, k = _case([0.5, 0.6], [0, 0])
    with pytest.raises(DegenerateGroundTruthError):
        pixel_auc(m, g, k)
    with pytest.raises(DegenerateGroundTruthError):
        average_precision(m, g, k)
    with pytest.raises(DegenerateGroundTruthError):
        max_dice(m, g, k)
    m, g, k = _case([0.5, 0.6], [1, 1])
    with pytest.raises(DegenerateGroundTruthError):
        pixel_auc(m, g, k)
    with pytest.raises(DegenerateGroundTruthError):
        fpr_at_max_dice(m, g, k)


def test_grid_and_mask_validation():
    m, g, k = _case([0.5, 0.6], [1, 0])
    other = BinaryMask3D(np.ones((3, 1, 1), dtype=bool))
    with pytest.raises(ValueError):
        pixel_auc(m, g, other)
    with pytest.raises(ValueError):
        pixel_auc(m, g, BinaryMask3D(np.zeros((2, 1, 1), dtype=bool)))
    with pytest.raises(ValueError):
        max_dice(m, g, k, n_thresholds=1)


def test_metrics_match_brute_force_oracles():
    # ties are deliberately frequent: scores come from a tiny value set
    rng = np.random.default_rng(2024)
    values = np.array([0.0, 0.25, 0.3, 0.5, 0.75, 1.0])
    for trial in range(300):
        n = int(rng.integers(2, 17))
        scores = rng.choice(values, size=n)
        labels = rng.random(n) < 0.5
        if labels.all() or not labels.any():
            continue
        m, g, k = _case(scores, labels)

        assert pixel_auc(m, g, k) == oracles.auc_pairwise(scores, labels), trial
        assert average_precision(m, g, k) == oracles.ap_grouped(scores, labels), trial

        want_dice, want_theta, want_fpr = oracles.dice_fpr_sweep(
            scores, labels, _grid(scores)
        )
        dice, theta = max_dice(m, g, k)
        assert dice == want_dice, trial
        assert theta == want_theta, trial
        assert fpr_at_max_dice(m, g, k) == want_fpr, trial


def test_metrics_respect_eval_mask():
    scores = np.array([0.9, 0.1, 0.8, 0.2]).reshape(4, 1, 1)
    gt = np.array([True, False, False, True]).reshape(4, 1, 1)
    mask = np.array([True, True, False, False]).reshape(4, 1, 1)
    m = Volume3D(scores)
    auc = pixel_auc(m, BinaryMask3D(gt), BinaryMask3D(mask))
    assert auc == 1.0  # only the first two voxels are visible


def test_score_sample_and_exclusions():
    m, g, k = _case([0.8, 0.6, 0.4, 0.2], [1, 1, 0, 0])
    s = score_sample(m, g, k, sample_id="s1")
    assert isinstance(s, SampleScore)
    assert s.sample_id == "s1"
    assert s.auc == 1.0 and s.dice_max == 1.0 and s.fpr == 0.0
    assert s.best_threshold == 0.4

    m, g, k = _case([0.8, 0.6], [0, 0])
    e = score_sample(m, g, k, sample_id="empty")
    assert isinstance(e, ExcludedSample)
    assert "no positive voxels" in e.reason

    m, g, k = _case([0.8, 0.6], [1, 1])
    e = score_sample(m, g, k, sample_id="full")
    assert isinstance(e, ExcludedSample)
    assert "whole evaluation mask" in e.reason


def test_aggregate_means_and_report():
    a = SampleScore("a", auc=1.0, ap=1.0, dice_max=1.0, best_threshold=0.4, fpr=0.0)
    b = SampleScore("b", auc=0.5, ap=0.25, dice_max=0.5, best_threshold=0.2, fpr=0.5)
    ex = ExcludedSample("c", "no positive voxels in the evaluation mask")
    report = aggregate([a, b, ex])
    assert report.mean_auc == 0.75
    assert report.mean_ap == 0.625
    assert report.mean_dice == 0.75
    assert report.mean_fpr == 0.25
    d = report.to_dict()
    assert d["n_included"] == 2
    assert d["n_excluded"] == 1
    assert d["excluded"][0]["sample_id"] == "c"
    assert {p["sample_id"] for p in d["per_sample"]} == {"a", "b"}
    assert d["mean"]["auc"] == 0.75

    with pytest.raises(ValueError, match="no scorable samples"):
        aggregate([ex])
    with pytest.raises(TypeError):
        aggregate([a, "bogus"])
