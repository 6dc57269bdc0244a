"""Evaluation tests: alignment, NME, box statistics, EDC, verification."""

import numpy as np
import pytest

from siamese3dmm.evaluation import (
    EvalRecord,
    edc_curve,
    nme,
    per_identity_boxstats,
    reconstruction_eval,
    rigid_align,
    sample_verification_pairs,
    verification_eval,
)
from siamese3dmm.morphable import make_synthetic_basis, rotation_from_euler
from siamese3dmm.synthdata import generate_dataset


def random_rigid_transform(rng):
    rotation = rotation_from_euler(*rng.uniform(-np.pi, np.pi, size=3))
    translation = rng.uniform(-5.0, 5.0, size=3)
    return rotation, translation


def apply_rigid(shape, rotation, translation):
    points = shape.reshape(-1, 3)
    return (points @ rotation.T + translation).reshape(-1)


class TestRigidAlign:
    def test_identity_when_target_equals_source(self):
        rng = np.random.default_rng(0)
        shape = rng.normal(scale=3.0, size=30)
        rotation, translation, aligned = rigid_align(shape, shape.copy())
        np.testing.assert_allclose(rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(translation, np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(aligned, shape, atol=1e-12)

    def test_recovers_random_transforms(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            shape = rng.normal(scale=4.0, size=3 * 12)
            rot, trans = random_rigid_transform(rng)
            target = apply_rigid(shape, rot, trans)
            found_rot, found_trans, aligned = rigid_align(shape, target)
            np.testing.assert_allclose(found_rot, rot, atol=1e-9)
            np.testing.assert_allclose(found_trans, trans, atol=1e-9)
            rmse = np.sqrt(np.mean((aligned - target) ** 2))
            assert rmse < 1e-8
            np.testing.assert_allclose(found_rot.T @ found_rot, np.eye(3), atol=1e-10)
            assert np.linalg.det(found_rot) == pytest.approx(1.0, abs=1e-10)

    def test_pure_translation(self):
        rng = np.random.default_rng(2)
        shape = rng.normal(size=3 * 8)
        target = apply_rigid(shape, np.eye(3), np.array([1.0, -2.0, 0.5]))
        rotation, translation, _ = rigid_align(shape, target)
        np.testing.assert_allclose(rotation, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(translation, [1.0, -2.0, 0.5], atol=1e-10)

    def test_degenerate_collinear_points_rejected(self):
        line = np.array([[t, 0.0, 0.0] for t in range(5)], dtype=float).reshape(-1)
        with pytest.raises(ValueError, match="degenerate"):
            rigid_align(line, line.copy())

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match="3 points"):
            rigid_align(np.zeros(6), np.zeros(6))

    def test_count_mismatch_rejected_in_correspondence_mode(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="equal vertex counts"):
            rigid_align(rng.normal(size=12), rng.normal(size=15))

    def test_icp_matches_closed_form_when_matching_is_identity(self):
        rng = np.random.default_rng(4)
        # Well-separated points under a small motion keep nearest neighbors
        # aligned with the true correspondence.
        points = np.array([[i * 5.0, (i % 3) * 5.0, (i % 2) * 5.0] for i in range(10)])
        points += rng.normal(scale=0.2, size=points.shape)
        shape = points.reshape(-1)
        rot = rotation_from_euler(0.03, -0.02, 0.01)
        target = apply_rigid(shape, rot, np.array([0.2, -0.1, 0.15]))
        rot_cf, trans_cf, aligned_cf = rigid_align(shape, target, mode="correspondence")
        rot_icp, trans_icp, aligned_icp = rigid_align(shape, target, mode="icp",
                                                      max_iter=100, tol=1e-14)
        np.testing.assert_allclose(rot_icp, rot_cf, atol=1e-9)
        np.testing.assert_allclose(trans_icp, trans_cf, atol=1e-9)
        np.testing.assert_allclose(aligned_icp, aligned_cf, atol=1e-8)

    def test_self_alignment_after_transform_has_tiny_rmse(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            shape = rng.normal(scale=2.0, size=3 * 15)
            rot, trans = random_rigid_transform(rng)
            _, _, aligned = rigid_align(shape, apply_rigid(shape, rot, trans))
            rmse = np.sqrt(np.mean((aligned - apply_rigid(shape, rot, trans)) ** 2))
            assert rmse < 1e-8


class TestNme:
    def test_zero_for_identical_shapes(self):
        rng = np.random.default_rng(6)
        shape = rng.normal(size=3 * 10)
        assert nme(shape, shape.copy()) == 0.0

    def test_hand_case_fifty_percent(self):
        gt = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0])   # unit x-y box
        aligned = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 0.0])  # one vertex off by 1 in z
        assert nme(aligned, gt) == pytest.approx(50.0, rel=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(7)
        gt = rng.normal(scale=3.0, size=3 * 9)
        aligned = gt + rng.normal(scale=0.3, size=gt.size)
        gt_pts = gt.reshape(-1, 3)
        total = 0.0
        for a, g in zip(aligned.reshape(-1, 3), gt_pts):
            total += np.sqrt(sum((a[c] - g[c]) ** 2 for c in range(3)))
        box = np.sqrt((gt_pts[:, 0].max() - gt_pts[:, 0].min())
                      * (gt_pts[:, 1].max() - gt_pts[:, 1].min()))
        expected = 100.0 * (total / 9) / box
        assert nme(aligned, gt) == pytest.approx(expected, rel=1e-12)

    def test_zero_area_box_rejected(self):
        flat = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0])
        with pytest.raises(ValueError, match="bounding box"):
            nme(flat, flat.copy())

    def test_translation_invariance_after_realignment(self):
        rng = np.random.default_rng(8)
        gt = rng.normal(scale=3.0, size=3 * 12)
        predicted = gt + rng.normal(scale=0.2, size=gt.size)
        _, _, aligned = rigid_align(predicted, gt)
        baseline = nme(aligned, gt)
        shift = np.array([4.0, -2.0, 7.0])
        gt_shifted = apply_rigid(gt, np.eye(3), shift)
        predicted_shifted = apply_rigid(predicted, np.eye(3), shift)
        _, _, aligned_shifted = rigid_align(predicted_shifted, gt_shifted)
        assert nme(aligned_shifted, gt_shifted) == pytest.approx(baseline, rel=1e-9)


@pytest.fixture(scope="module")
def small_world():
    basis = make_synthetic_basis(24, 10, seed=40)
    dataset = generate_dataset(basis, 5, 4, noise_sigma=0.0, seed=41)
    return basis, dataset


class TestReconstructionEval:
    def test_oracle_model_scores_zero_everywhere(self, small_world):
        basis, dataset = small_world
        records = reconstruction_eval(lambda s: s.params_gt, dataset, basis)
        assert len(records) == len(dataset.samples)
        assert all(r.nme_percent < 1e-8 for r in records)

    def test_constant_model_gives_finite_records(self, small_world):
        basis, dataset = small_world
        constant = dataset.samples[0].params_gt
        records = reconstruction_eval(lambda s: constant, dataset, basis)
        assert len(records) == len(dataset.samples)
        assert all(np.isfinite(r.nme_percent) for r in records)
        # Every sample of one identity shares its ground-truth shape only up
        # to expression, so records within an identity stay distinct reals.
        assert all(r.nme_percent >= 0.0 for r in records)

    def test_record_identity_and_pose_tags(self, small_world):
        basis, dataset = small_world
        records = reconstruction_eval(lambda s: s.params_gt, dataset, basis)
        tags = {(r.identity_id, r.pose_id) for r in records}
        assert tags == {(s.identity_id, s.pose_id) for s in dataset.samples}


class TestBoxStats:
    def test_identical_values_collapse(self):
        records = [EvalRecord(0, p, 4.0) for p in range(6)]
        stats = per_identity_boxstats(records)
        assert len(stats) == 1
        s = stats[0]
        assert (s.minimum, s.q1, s.median, s.q3, s.maximum, s.iqr) == \
            (4.0, 4.0, 4.0, 4.0, 4.0, 0.0)

    def test_textbook_quartiles(self):
        records = [EvalRecord(3, p, float(v)) for p, v in enumerate([1, 2, 3, 4, 5])]
        s = per_identity_boxstats(records)[0]
        assert (s.q1, s.median, s.q3) == (2.0, 3.0, 4.0)
        assert s.iqr == 2.0

    def test_matches_sort_based_oracle(self):
        rng = np.random.default_rng(9)
        records = []
        for identity in range(4):
            for pose in range(9):
                records.append(EvalRecord(identity, pose, float(rng.uniform(0, 30))))
        for s in per_identity_boxstats(records):
            values = np.sort([r.nme_percent for r in records
                              if r.identity_id == s.identity_id])

            def interpolated(q, values=values):
                position = q * (len(values) - 1)
                low = int(np.floor(position))
                high = int(np.ceil(position))
                return values[low] + (position - low) * (values[high] - values[low])

            assert s.q1 == pytest.approx(interpolated(0.25), rel=1e-12)
            assert s.median == pytest.approx(interpolated(0.5), rel=1e-12)
            assert s.q3 == pytest.approx(interpolated(0.75), rel=1e-12)
            assert s.minimum == values[0] and s.maximum == values[-1]


class TestEdc:
    def test_step_hand_case(self):
        records = [EvalRecord(0, p, 10.0) for p in range(4)]
        curve = edc_curve(records, [5.0, 10.0, 15.0])
        assert curve == [(5.0, 0.0), (10.0, 1.0), (15.0, 1.0)]

    def test_empty_threshold_list(self):
        assert edc_curve([EvalRecord(0, 0, 1.0)], []) == []

    def test_matches_counting_oracle_and_is_monotone(self):
        rng = np.random.default_rng(10)
        records = [EvalRecord(0, p, float(v))
                   for p, v in enumerate(rng.uniform(0, 40, size=60))]
        thresholds = np.linspace(0.0, 42.0, 22)
        curve = edc_curve(records, thresholds)
        fractions = [f for _, f in curve]
        for t, f in curve:
            count = sum(1 for r in records if r.nme_percent <= t)
            assert f == pytest.approx(count / 60)
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))
        assert fractions[0] == 0.0 and fractions[-1] == 1.0

    def test_unsorted_thresholds_rejected(self):
        with pytest.raises(ValueError, match="ascending"):
            edc_curve([EvalRecord(0, 0, 1.0)], [2.0, 1.0])


class TestVerification:
    def test_separable_embeddings_reach_perfect_accuracy(self, small_world):
        _, dataset = small_world
        # Identity-coded embeddings: genuine distance 0, impostor distance > 0.
        embed = lambda s: np.array([float(s.identity_id), 0.0])
        result = verification_eval(embed, dataset, n_pairs=40, n_genuine=20,
                                   folds=5, seed=0)
        assert result.mean_accuracy == 1.0
        assert len(result.fold_accuracies) == 5

    def test_random_embeddings_sit_near_chance(self):
        # Small pair totals bias the held-out accuracy below chance (train and
        # test fold imbalances are anti-correlated), so run at protocol scale.
        basis = make_synthetic_basis(24, 10, seed=42)
        dataset = generate_dataset(basis, 12, 8, noise_sigma=0.0, seed=43)
        means = []
        for seed in range(10):
            noise = np.random.default_rng(1000 + seed)
            embed = lambda s: noise.normal(size=8)
            result = verification_eval(embed, dataset, n_pairs=600, n_genuine=300,
                                       folds=10, seed=seed)
            means.append(result.mean_accuracy)
        assert abs(np.mean(means) - 0.5) <= 0.05

    def test_pair_counts_are_exact(self, small_world):
        _, dataset = small_world
        rng = np.random.default_rng(11)
        pairs = sample_verification_pairs(dataset.samples, 12, 20, rng)
        assert sum(p.label for p in pairs) == 12
        assert sum(1 - p.label for p in pairs) == 20
        keys = {(id(p.first), id(p.second)) for p in pairs}
        assert len(keys) == 32

    def test_roc_is_monotone_with_full_range(self, small_world):
        _, dataset = small_world
        noise = np.random.default_rng(12)
        embed = lambda s: noise.normal(size=4)
        result = verification_eval(embed, dataset, n_pairs=60, n_genuine=30,
                                   folds=6, seed=3)
        fpr = result.roc_points[:, 0]
        tpr = result.roc_points[:, 1]
        assert np.all(np.diff(fpr) >= 0)
        assert np.all(np.diff(tpr) >= 0)
        assert fpr[0] == 0.0 and tpr[0] == 0.0
        assert fpr[-1] == 1.0 and tpr[-1] == 1.0

    def test_fewer_pairs_than_folds_rejected(self, small_world):
        _, dataset = small_world
        with pytest.raises(ValueError, match="folds"):
            verification_eval(lambda s: np.zeros(2), dataset, n_pairs=5,
                              n_genuine=2, folds=10, seed=0)

    def test_unsupported_pair_counts_name_the_deficiency(self, small_world):
        _, dataset = small_world
        with pytest.raises(ValueError, match="genuine"):
            verification_eval(lambda s: np.zeros(2), dataset, n_pairs=10_000,
                              n_genuine=9_999, folds=10, seed=0)

    def test_distance_modes(self, small_world):
        _, dataset = small_world
        embed = lambda s: np.array([1.0 + s.identity_id, 2.0, 0.5 * s.pose_id])
        for mode in ("euclidean", "normalized", "cosine"):
            result = verification_eval(embed, dataset, n_pairs=30, n_genuine=15,
                                       folds=5, seed=4, distance=mode)
            assert np.isfinite(result.mean_accuracy)
        with pytest.raises(ValueError, match="distance"):
            verification_eval(embed, dataset, n_pairs=30, n_genuine=15,
                              folds=5, seed=4, distance="manhattan")
