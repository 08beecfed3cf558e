"""Tests for score vectors, calibration, p-values and detection."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.conformal import (
    AggregationKind,
    CalibrationArtifact,
    SMOOTHED_FLOOR,
    aggregate,
    build_artifact,
    cad_p_value,
    calibrate,
    config_fingerprint,
    detect,
    detection_stream,
    p_value,
    p_value_smoothed,
    p_values,
    score_points,
    score_vector,
    smoothing_stream,
)
from src.core_types import RngStream, as_tensor
from src.errors import (
    EmptyCalibration,
    EmptyVector,
    InvalidEpsilon,
    InvalidN,
    NonFiniteScore,
    TooFewScores,
)
from src.model_zoo import Model
from src.ncm import NcmConfig
from src.synthetic import SyntheticKind, SyntheticSpec, generate
from src.transforms import FamilyId, TransformFamily

ROTATION = TransformFamily(family_id=FamilyId.ROTATION_2D)


def _artifact(scores, n: int = 1) -> CalibrationArtifact:
    return build_artifact(scores, n=n, seed=0, fingerprint="test")


class TestScoreVector:
    """Tests for score_vector."""

    def test_single_transform(self):
        v = score_vector(NcmConfig(), Model(), ROTATION, as_tensor([1.0, 0.0]), 1, RngStream(seed=1))
        assert len(v.scores) == 1
        assert len(v.transforms) == 1

    def test_unit_circle_scores_zero(self):
        """Test a unit-circle point scores zero under five random rotations."""
        v = score_vector(NcmConfig(), Model(), ROTATION, as_tensor([0.0, 1.0]), 5, RngStream(seed=2))
        assert all(s == pytest.approx(0.0, abs=1e-10) for s in v.scores)

    def test_zero_transforms_rejected(self):
        with pytest.raises(InvalidN):
            score_vector(NcmConfig(), Model(), ROTATION, as_tensor([1.0, 0.0]), 0, RngStream(seed=1))

    def test_transforms_differ_per_index(self):
        v = score_vector(NcmConfig(), Model(), ROTATION, as_tensor([3.0, 0.0]), 4, RngStream(seed=3))
        assert len({g.params for g in v.transforms}) == 4

    def test_replays_with_same_stream(self):
        x = as_tensor([3.0, 0.5])
        a = score_vector(NcmConfig(), Model(), ROTATION, x, 5, RngStream(seed=3, path=(7,)))
        b = score_vector(NcmConfig(), Model(), ROTATION, x, 5, RngStream(seed=3, path=(7,)))
        assert a == b


class TestAggregate:
    """Tests for aggregate."""

    def test_sum(self):
        assert aggregate(AggregationKind.SUM, [0.1, 0.2, 0.3]) == pytest.approx(0.6)

    def test_singleton(self):
        assert aggregate(AggregationKind.SUM, [0.4]) == 0.4

    def test_zeros(self):
        assert aggregate(AggregationKind.SUM, [0.0] * 5) == 0.0

    def test_mean_and_max(self):
        assert aggregate(AggregationKind.MEAN, [1.0, 2.0, 6.0]) == 3.0
        assert aggregate(AggregationKind.MAX, [1.0, 2.0, 6.0]) == 6.0

    def test_empty_raises(self):
        with pytest.raises(EmptyVector):
            aggregate(AggregationKind.SUM, [])

    def test_accepts_score_vector(self):
        v = score_vector(NcmConfig(), Model(), ROTATION, as_tensor([3.0, 0.0]), 3, RngStream(seed=4))
        assert aggregate(AggregationKind.SUM, v) == pytest.approx(sum(v.scores))


class TestCalibrate:
    """Tests for build_artifact and calibrate."""

    def test_scores_sorted(self):
        art = _artifact([3.0, 1.0, 4.0, 2.0])
        assert art.sorted_scores == (1.0, 2.0, 3.0, 4.0)
        assert art.k == 4

    def test_empty_points_raise(self):
        with pytest.raises(EmptyCalibration):
            calibrate([], NcmConfig(), Model(), ROTATION, 5, seed=0)

    def test_empty_scores_raise(self):
        with pytest.raises(EmptyCalibration):
            _artifact([])

    def test_non_finite_scores_raise(self):
        with pytest.raises(NonFiniteScore):
            _artifact([1.0, math.nan])

    def test_unsorted_artifact_rejected(self):
        with pytest.raises(ValidationError):
            CalibrationArtifact(n=1, seed=0, config_fingerprint="x", sorted_scores=(2.0, 1.0))

    def test_annulus_points_score_zero(self):
        """Test clean iD annulus points calibrate to all-zero scores."""
        points = generate(SyntheticSpec(kind=SyntheticKind.ANNULUS_ID, count=50, seed=1))
        art = calibrate(points, NcmConfig(), Model(), ROTATION, 5, seed=9)
        assert all(s == pytest.approx(0.0, abs=1e-10) for s in art.sorted_scores)

    def test_same_seed_same_artifact(self):
        points = generate(SyntheticSpec(kind=SyntheticKind.RING_OOD, count=20, seed=1))
        a = calibrate(points, NcmConfig(), Model(), ROTATION, 3, seed=5)
        b = calibrate(points, NcmConfig(), Model(), ROTATION, 3, seed=5)
        assert a == b
        assert a.config_fingerprint == config_fingerprint(ROTATION, NcmConfig(), Model())

    def test_workers_do_not_change_scores(self):
        """Test threaded scoring matches sequential scoring exactly."""
        points = generate(SyntheticSpec(kind=SyntheticKind.RING_OOD, count=30, seed=2))
        seq = score_points(points, NcmConfig(), Model(), ROTATION, 3, RngStream(seed=1))
        par = score_points(points, NcmConfig(), Model(), ROTATION, 3, RngStream(seed=1), workers=4)
        assert seq == par

    def test_progress_reported(self):
        calls = []
        points = generate(SyntheticSpec(count=4, seed=2))
        calibrate(points, NcmConfig(), Model(), ROTATION, 1, seed=0,
                  on_progress=lambda cur, tot, label: calls.append((cur, tot)))
        assert calls == [(1, 4), (2, 4), (3, 4), (4, 4)]

    def test_fingerprint_tracks_config(self):
        a = config_fingerprint(ROTATION, NcmConfig(), Model())
        b = config_fingerprint(ROTATION, NcmConfig(), Model(noise_sd=0.3))
        c = config_fingerprint(ROTATION, NcmConfig(), Model(), AggregationKind.MAX)
        assert len({a, b, c}) == 3

    def test_streams_are_distinct(self):
        assert detection_stream(1) != smoothing_stream(1)
        assert detection_stream(1) != RngStream(seed=1)


class TestPValue:
    """Tests for the strict and smoothed p-values."""

    ART = build_artifact([1.0, 2.0, 3.0, 4.0], n=1, seed=0, fingerprint="test")

    def test_between_scores(self):
        assert p_value(self.ART, 2.5).value == pytest.approx(0.6)

    def test_above_all(self):
        assert p_value(self.ART, 5.0).value == pytest.approx(0.2)

    def test_below_all(self):
        assert p_value(self.ART, 0.0).value == 1.0

    def test_ties_count(self):
        assert p_value(self.ART, 2.0).value == pytest.approx(0.8)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteScore):
            p_value(self.ART, math.inf)

    def test_monotone_in_score(self):
        values = [p_value(self.ART, t).value for t in np.linspace(-1, 6, 50)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_batch_matches_single(self):
        tests = [0.0, 1.0, 1.5, 2.0, 4.0, 4.5]
        batch = p_values(self.ART, tests)
        assert batch.tolist() == [p_value(self.ART, t).value for t in tests]

    def test_smoothed_no_ties(self):
        p = p_value_smoothed(self.ART, 2.5, 0.5)
        assert p.value == pytest.approx(0.5)
        assert p.smoothed

    def test_smoothed_floor(self):
        """Test an all-tied u = 0 smoothed p-value is floored above zero."""
        art = _artifact([2.0, 2.0, 2.0])
        assert p_value_smoothed(art, 2.0, 0.0).value == SMOOTHED_FLOOR
        assert p_value_smoothed(art, 2.0, 0.0).value > 0.0

    def test_smoothed_upper_limit(self):
        art = _artifact([2.0, 2.0, 2.0])
        assert p_value_smoothed(art, 2.0, 1.0 - 1e-12).value == pytest.approx(1.0)

    def test_smoothed_rejects_bad_u(self):
        with pytest.raises(ValueError):
            p_value_smoothed(self.ART, 2.5, 1.0)


class TestDetect:
    """Tests for detect."""

    ART = build_artifact([1.0, 2.0, 3.0, 4.0], n=1, seed=0, fingerprint="test")

    def test_not_flagged_above_epsilon(self):
        """Test p = 0.6 at epsilon 0.5 is not OOD."""
        assert not detect(self.ART, 2.5, 0.5).is_ood

    def test_flagged_below_epsilon(self):
        """Test p = 0.2 at epsilon 0.25 is OOD."""
        assert detect(self.ART, 5.0, 0.25).is_ood

    def test_strict_boundary(self):
        """Test p = 0.2 at epsilon 0.2 is not OOD."""
        result = detect(self.ART, 5.0, 0.2)
        assert result.p.value == pytest.approx(0.2)
        assert not result.is_ood

    def test_invalid_epsilon(self):
        for eps in (0.0, 1.0, -0.1):
            with pytest.raises(InvalidEpsilon):
                detect(self.ART, 1.0, eps)

    def test_smoothed_detection(self):
        result = detect(self.ART, 5.0, 0.1, u=0.25)
        assert result.p.smoothed
        assert result.p.value == pytest.approx(0.05)
        assert result.is_ood


class TestCadPValue:
    """Tests for cad_p_value."""

    def test_between(self):
        assert cad_p_value([1.0, 2.0, 3.0, 2.5]).value == pytest.approx(0.5)

    def test_minimal(self):
        assert cad_p_value([1.0, 2.0, 3.0, 0.0]).value == 1.0

    def test_maximal(self):
        assert cad_p_value([1.0, 2.0, 3.0, 4.0]).value == pytest.approx(0.25)

    def test_too_few(self):
        with pytest.raises(TooFewScores):
            cad_p_value([1.0])
