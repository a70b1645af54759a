import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagdet.intervals import (
    ScoredInterval,
    TemporalInterval,
    iou,
    iou_matrix,
    nms,
    overlap_fraction,
)

from oracles import ref_nms

T = TemporalInterval


@st.composite
def intervals(draw, max_start=100.0):
    start = draw(st.floats(0.0, max_start, allow_nan=False))
    length = draw(st.floats(1e-3, 50.0, allow_nan=False))
    return T(start, start + length)


class TestTemporalInterval:
    def test_duration(self):
        assert T(2.0, 5.5).duration() == 3.5

    @pytest.mark.parametrize("start,end", [(5, 5), (5, 4), (-1, 2), (0, float("inf"))])
    def test_rejects_invalid(self, start, end):
        with pytest.raises(ValueError):
            T(start, end)

    def test_scored_interval_rejects_nan(self):
        with pytest.raises(ValueError):
            ScoredInterval(T(0, 1), float("nan"))


class TestIou:
    def test_identical(self):
        assert iou(T(0, 10), T(0, 10)) == 1.0

    def test_touching(self):
        assert iou(T(0, 5), T(5, 10)) == 0.0

    def test_partial(self):
        # intersection 5, union 15
        assert iou(T(0, 10), T(5, 15)) == pytest.approx(5 / 15, abs=1e-12)

    @given(intervals(), intervals())
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == 1.0

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(0, 50, size=(30, 1))
        a = np.hstack([s, s + rng.uniform(0.1, 20, size=(30, 1))])
        m = iou_matrix(a[:10], a[10:])
        for i in range(10):
            for j in range(20):
                assert m[i, j] == iou(T(*a[i]), T(*a[10 + j]))


class TestOverlapFraction:
    def test_no_annotations(self):
        assert overlap_fraction(T(0, 10), []) == 0.0

    def test_overlapping_annotations_counted_once(self):
        assert overlap_fraction(T(0, 10), [T(2, 4), T(3, 6)]) == pytest.approx(0.4)

    def test_contained(self):
        assert overlap_fraction(T(2, 4), [T(0, 10)]) == 1.0

    @given(intervals())
    def test_self_is_one(self, a):
        assert overlap_fraction(a, [a]) == 1.0

    @given(intervals(), st.lists(intervals(), max_size=6), intervals())
    def test_monotone_in_annotations(self, a, anns, extra):
        assert overlap_fraction(a, anns + [extra]) >= overlap_fraction(a, anns) - 1e-12


def _random_items(rng, n, n_classes=3, quantize=False):
    items = []
    for _ in range(n):
        s = float(rng.uniform(0, 40))
        if quantize:
            s = float(np.round(s))
        length = float(rng.choice([1.0, 2.0, 5.0])) if quantize else float(rng.uniform(0.5, 15))
        score = float(rng.integers(0, 4)) if quantize else float(rng.uniform())
        items.append(ScoredInterval(T(s, s + length), score, int(rng.integers(0, n_classes))))
    return items


def _as_tuples(items):
    return [(it.interval.start, it.interval.end, it.score, it.class_id) for it in items]


class TestNms:
    def test_empty(self):
        assert nms([], 0.5) == []

    def test_duplicate_suppressed(self):
        a = ScoredInterval(T(0, 10), 0.9)
        b = ScoredInterval(T(0, 10), 0.8)
        assert nms([b, a], 0.5) == [a]

    def test_disjoint_kept(self):
        a = ScoredInterval(T(0, 10), 0.9)
        b = ScoredInterval(T(20, 30), 0.8)
        assert nms([a, b], 0.5) == [a, b]

    def test_tie_break_earlier_start_then_shorter(self):
        a = ScoredInterval(T(1, 11), 0.5)
        b = ScoredInterval(T(0, 10), 0.5)
        c = ScoredInterval(T(0, 9.5), 0.5)
        assert nms([a, b, c], 0.5) == [c]
        assert nms([a, b, c], 1.0) == [c, b, a]

    def test_class_aware(self):
        a = ScoredInterval(T(0, 10), 0.9, 0)
        b = ScoredInterval(T(0, 10), 0.8, 1)
        assert nms([a, b], 0.5, class_aware=True) == [a, b]
        assert nms([a, b], 0.5, class_aware=False) == [a]

    def test_threshold_one_keeps_everything(self):
        items = _random_items(np.random.default_rng(1), 40)
        assert len(nms(items, 1.0)) == len(items)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            nms([], 1.5)

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("class_aware", [False, True])
    def test_matches_reference(self, seed, class_aware):
        rng = np.random.default_rng(seed)
        items = _random_items(rng, 50, quantize=seed % 2 == 0)
        for thr in (0.0, 0.3, 0.6, 0.95):
            got = _as_tuples(nms(items, thr, class_aware))
            assert got == ref_nms(_as_tuples(items), thr, class_aware)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(intervals(40.0), st.floats(0, 1), st.integers(0, 2)), max_size=25),
           st.floats(0.0, 1.0))
    def test_properties(self, raw, thr):
        items = [ScoredInterval(iv, s, c) for iv, s, c in raw]
        kept = nms(items, thr, class_aware=True)
        assert all(any(k is it for it in items) for k in kept)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                if a.class_id == b.class_id:
                    assert iou(a.interval, b.interval) <= thr
        if items:
            assert max(items, key=lambda it: (it.score, -it.interval.start, -it.interval.duration())) in kept
