"""Tracking: gated assignment, pairwise cost, session chaining, counts."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ami.errors import InputError
from ami.inference.types import MOTH, BoundingBox, Detection
from ami.tracking import (
    CostWeights,
    assign,
    count_individuals,
    iou,
    pairwise_cost,
    track_session,
)

from oracles import brute_force_assign, pixel_grid_iou


def unit_feature(values):
    v = np.asarray(values, dtype=float)
    return v / np.linalg.norm(v)


def moth_detection(box, feature=None, species=None, score=0.9):
    return Detection(
        box=BoundingBox(*box),
        det_score=score,
        binary=(MOTH, 0.9),
        species=species,
        feature=feature,
    )


class TestAssign:
    def test_singleton(self):
        result = assign([[0.0]], gate=1.0)
        assert result.matches == [(0, 0)]
        assert result.unmatched_rows == []
        assert result.unmatched_cols == []

    def test_two_by_two_diagonal(self):
        costs = [[0.1, 0.2], [0.2, 0.1]]
        result = assign(costs, gate=1.0)
        assert result.matches == [(0, 0), (1, 1)]
        total = costs[0][0] + costs[1][1]
        assert total == pytest.approx(0.2)

    def test_gated_column_left_unmatched(self):
        result = assign([[0.2, 0.9]], gate=0.5)
        assert result.matches == [(0, 0)]
        assert result.unmatched_cols == [1]

    def test_forbidden_pairs_never_matched(self):
        # both entries above gate: row and col stay unmatched
        result = assign([[0.9, 0.8]], gate=0.5)
        assert result.matches == []
        assert result.unmatched_rows == [0]
        assert result.unmatched_cols == [0, 1]

    def test_gating_beats_greedy_filtering(self):
        # filtering a full assignment after the fact would drop (0,0)/(1,1)
        # pairings; the gated optimum still matches both rows
        costs = [[0.3, 0.4], [0.9, 0.3]]
        result = assign(costs, gate=0.5)
        assert result.matches == [(0, 0), (1, 1)]

    def test_nan_rejected(self):
        with pytest.raises(InputError):
            assign([[float("nan")]], gate=1.0)

    def test_infinite_rejected(self):
        with pytest.raises(InputError):
            assign([[float("inf")]], gate=1.0)

    def test_empty(self):
        result = assign(np.zeros((0, 3)), gate=1.0)
        assert result.matches == []
        assert result.unmatched_cols == [0, 1, 2]

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            n = int(rng.integers(1, 8))
            m = int(rng.integers(1, 8))
            costs = rng.random((n, m))
            gate = float(rng.choice([0.2, 0.5, 0.8, 1.0]))
            result = assign(costs, gate=gate)
            expected, _, _, expected_total = brute_force_assign(costs, gate)
            assert result.matches == expected
            total = sum(Fraction(float(costs[i, j])) for i, j in result.matches)
            assert total == expected_total

    def test_matches_brute_force_under_ties(self):
        # quantized costs force many exactly-tied optima; the
        # lexicographic tie-break must agree with enumeration
        rng = np.random.default_rng(11)
        for _ in range(150):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 6))
            costs = rng.choice([0.0, 0.25, 0.5, 1.0], size=(n, m))
            gate = float(rng.choice([0.25, 0.5, 1.0]))
            result = assign(costs, gate=gate)
            expected, unmatched_rows, unmatched_cols, _ = brute_force_assign(costs, gate)
            assert result.matches == expected
            assert result.unmatched_rows == unmatched_rows
            assert result.unmatched_cols == unmatched_cols

    @settings(max_examples=200, deadline=None)
    @given(
        st.integers(1, 5),
        st.integers(1, 5),
        st.integers(0, 2**31 - 1),
        st.sampled_from([0.1, 0.3, 0.6, 1.0]),
    )
    def test_hypothesis_equivalence(self, n, m, seed, gate):
        rng = np.random.default_rng(seed)
        costs = np.round(rng.random((n, m)), 2)
        result = assign(costs, gate=gate)
        expected, _, _, _ = brute_force_assign(costs, gate)
        assert result.matches == expected

    def test_monotone_gating(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            costs = rng.random((int(rng.integers(1, 7)), int(rng.integers(1, 7))))
            low, high = sorted(rng.random(2))
            fewer = len(assign(costs, gate=float(low)).matches)
            more = len(assign(costs, gate=float(high)).matches)
            assert fewer <= more


class TestIoU:
    def test_identity(self):
        box = BoundingBox(0, 0, 10, 10)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0

    def test_quarter_overlap(self):
        value = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
        assert value == pytest.approx(25 / 175, abs=1e-12)

    def test_against_pixel_grid_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            ax0, ay0 = rng.integers(0, 20, size=2)
            aw, ah = rng.integers(1, 15, size=2)
            bx0, by0 = rng.integers(0, 20, size=2)
            bw, bh = rng.integers(1, 15, size=2)
            a = (int(ax0), int(ay0), int(ax0 + aw), int(ay0 + ah))
            b = (int(bx0), int(by0), int(bx0 + bw), int(by0 + bh))
            fast = iou(BoundingBox(*a), BoundingBox(*b))
            assert fast == pytest.approx(pixel_grid_iou(a, b), abs=1e-9)

    def test_symmetry_and_bound(self):
        rng = np.random.default_rng(9)

        def random_box():
            x0, y0 = rng.random(2) * 50
            w, h = rng.random(2) * 60 + 0.5
            return BoundingBox(x0, y0, x0 + w, y0 + h)

        for _ in range(50):
            a, b = random_box(), random_box()
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0
            assert iou(a, a) == 1.0


class TestPairwiseCost:
    def test_identical_detections_zero_cost(self):
        feature = unit_feature([1, 2, 3])
        a = moth_detection((10, 10, 30, 30), feature=feature)
        b = moth_detection((10, 10, 30, 30), feature=feature)
        assert pairwise_cost(a, b, CostWeights(), image_diag=100.0) == 0.0

    def test_opposite_corners_half_cost(self):
        # equal sizes, IoU 0, center distance equal to the diagonal,
        # identical features: 0.25*1 + 0 + 0.25*1 + 0 = 0.5
        feature = unit_feature([1, 0])
        a = moth_detection((0, 0, 10, 10), feature=feature)
        b = moth_detection((90, 90, 100, 100), feature=feature)
        diag = math.hypot(90, 90)
        cost = pairwise_cost(a, b, CostWeights(0.25, 0.25, 0.25, 0.25), image_diag=diag)
        assert abs(cost - 0.5) <= 1e-12

    def test_orthogonal_features_half_cost(self):
        a = moth_detection((0, 0, 10, 10), feature=unit_feature([1, 0]))
        b = moth_detection((0, 0, 10, 10), feature=unit_feature([0, 1]))
        cost = pairwise_cost(a, b, CostWeights(0, 0, 0, 1), image_diag=100.0)
        assert abs(cost - 0.5) <= 1e-12

    def test_missing_feature_contributes_half(self):
        a = moth_detection((0, 0, 10, 10))
        b = moth_detection((0, 0, 10, 10), feature=unit_feature([1, 1]))
        cost = pairwise_cost(a, b, CostWeights(0, 0, 0, 1), image_diag=100.0)
        assert cost == pytest.approx(0.5)

    def test_bounds_and_symmetry_random(self):
        rng = np.random.default_rng(31)
        for _ in range(500):
            def random_detection():
                x0, y0 = rng.random(2) * 200
                w, h = rng.random(2) * 100 + 0.5
                feature = None
                if rng.random() > 0.3:
                    feature = unit_feature(rng.normal(size=8))
                return moth_detection((x0, y0, x0 + w, y0 + h), feature=feature)

            a, b = random_detection(), random_detection()
            weights = CostWeights(*rng.random(4) + 1e-9)
            cost_ab = pairwise_cost(a, b, weights, image_diag=300.0)
            cost_ba = pairwise_cost(b, a, weights, image_diag=300.0)
            assert cost_ab == cost_ba
            assert 0.0 <= cost_ab <= 1.0

    def test_degenerate_box_rejected(self):
        with pytest.raises(InputError):
            BoundingBox(10, 10, 10, 20)

    def test_weights_normalized(self):
        w = CostWeights(1, 1, 1, 1)
        assert w.w_iou == pytest.approx(0.25)
        assert w.w_iou + w.w_size + w.w_dist + w.w_feat == pytest.approx(1.0)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(InputError):
            CostWeights(0, 0, 0, 0)


class TestTrackSession:
    def test_single_moth_two_frames(self):
        feature = unit_feature([1, 2])
        frames = [
            [moth_detection((10, 10, 30, 30), feature=feature)],
            [moth_detection((14, 12, 34, 32), feature=feature)],
        ]
        tracks = track_session(frames, image_diag=math.hypot(640, 480))
        assert len(tracks) == 1
        assert [(it.frame_index, it.detection_index) for it in tracks[0].items] == [
            (0, 0),
            (1, 0),
        ]
        assert tracks[0].items[0].link_cost is None
        assert tracks[0].items[1].link_cost is not None

    def test_swapping_moths_follow_features(self):
        # positions swap between frames but the features are distinctive;
        # with w_feat dominant the tracks follow appearance, not position
        fa = unit_feature([1, 0, 0])
        fb = unit_feature([0, 1, 0])
        frames = [
            [
                moth_detection((0, 0, 20, 20), feature=fa),
                moth_detection((100, 100, 120, 120), feature=fb),
            ],
            [
                moth_detection((100, 100, 120, 120), feature=fa),
                moth_detection((0, 0, 20, 20), feature=fb),
            ],
        ]
        weights = CostWeights(0.05, 0.05, 0.05, 0.85)
        tracks = track_session(frames, w=weights, gate=1.0, image_diag=math.hypot(200, 200))
        assert len(tracks) == 2
        by_first = {t.items[0].detection_index: t for t in tracks}
        assert [(i.frame_index, i.detection_index) for i in by_first[0].items] == [
            (0, 0),
            (1, 0),
        ]
        assert [(i.frame_index, i.detection_index) for i in by_first[1].items] == [
            (0, 1),
            (1, 1),
        ]

    def test_empty_middle_frame_terminates(self):
        feature = unit_feature([1, 1])
        det = moth_detection((10, 10, 30, 30), feature=feature)
        frames = [[det], [], [det]]
        tracks = track_session(frames, image_diag=100.0)
        assert len(tracks) == 2
        assert all(len(t.items) == 1 for t in tracks)

    def test_partition_property_random_sessions(self):
        rng = np.random.default_rng(43)
        for _ in range(30):
            frames = []
            for _ in range(int(rng.integers(1, 8))):
                dets = []
                for _ in range(int(rng.integers(0, 6))):
                    x0, y0 = rng.random(2) * 400
                    w, h = rng.random(2) * 60 + 5
                    dets.append(
                        moth_detection(
                            (x0, y0, x0 + w, y0 + h),
                            feature=unit_feature(rng.normal(size=4)),
                        )
                    )
                frames.append(dets)
            tracks = track_session(frames, gate=0.8, image_diag=math.hypot(500, 500))
            seen = set()
            for track in tracks:
                frame_indices = [it.frame_index for it in track.items]
                assert frame_indices == sorted(frame_indices)
                assert len(set(frame_indices)) == len(frame_indices)
                for item in track.items:
                    key = (item.frame_index, item.detection_index)
                    assert key not in seen
                    seen.add(key)
            total = sum(len(dets) for dets in frames)
            assert len(seen) == total


class TestCountIndividuals:
    def test_simple_counting(self):
        frames = [
            [
                moth_detection((0, 0, 10, 10), species=[(1, 0.9)]),
                moth_detection((20, 20, 30, 30), species=[(1, 0.8)]),
                moth_detection((40, 40, 50, 50), species=[(2, 0.7)]),
            ]
        ]
        tracks = track_session(frames, image_diag=100.0)
        counts = count_individuals(tracks, frames)
        assert counts.species == {1: 2, 2: 1}

    def test_single_detection_consensus_is_top1(self):
        frames = [[moth_detection((0, 0, 10, 10), species=[(5, 0.6), (7, 0.4)])]]
        tracks = track_session(frames, image_diag=100.0)
        count_individuals(tracks, frames)
        assert tracks[0].consensus == (5, pytest.approx(0.6))

    def test_flapping_top1_resolved_by_mean(self):
        # per-frame argmax flips between 8 and 9 but the mean favors 8
        feature = unit_feature([1, 0])
        frames = [
            [moth_detection((0, 0, 10, 10), feature=feature, species=[(8, 0.6), (9, 0.4)])],
            [moth_detection((1, 1, 11, 11), feature=feature, species=[(9, 0.55), (8, 0.45)])],
            [moth_detection((2, 2, 12, 12), feature=feature, species=[(8, 0.7), (9, 0.3)])],
        ]
        tracks = track_session(frames, image_diag=100.0)
        assert len(tracks) == 1
        counts = count_individuals(tracks, frames)
        mean_8 = (0.6 + 0.45 + 0.7) / 3
        assert tracks[0].consensus == (8, pytest.approx(mean_8))
        assert counts.species == {8: 1}

    def test_track_without_species_counts_unclassified(self):
        frames = [[moth_detection((0, 0, 10, 10))]]
        tracks = track_session(frames, image_diag=100.0)
        counts = count_individuals(tracks, frames)
        assert counts.species == {"unclassified": 1}
        assert counts.genus == {"unclassified": 1}

    def test_consensus_tie_prefers_smaller_key(self):
        frames = [[moth_detection((0, 0, 10, 10), species=[(3, 0.5), (4, 0.5)])]]
        tracks = track_session(frames, image_diag=100.0)
        count_individuals(tracks, frames)
        assert tracks[0].consensus[0] == 3
