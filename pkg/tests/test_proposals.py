import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagdet.intervals import iou
from tagdet.proposals import (
    DEFAULT_GAMMAS,
    DEFAULT_TAUS,
    ActionnessTrack,
    Fragment,
    TagConfig,
    extract_fragments,
    grow_all,
    grow_from_fragment,
    sliding_windows,
    tag_propose,
    tag_regions,
)

from oracles import ref_fragments, ref_grow, ref_tag_cells, ref_tag_regions


def track(scores, stride=1.0):
    return ActionnessTrack("v", stride, np.asarray(scores, dtype=float))


scores_st = st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.8, 0.9, 1.0]), min_size=1, max_size=40)


class TestTrack:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            track([0.5, 1.2])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            track([])

    def test_default_grids(self):
        assert DEFAULT_TAUS == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        assert DEFAULT_GAMMAS == (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TagConfig(tau_grid=())
        with pytest.raises(ValueError):
            TagConfig(gamma_grid=(0.5, 0.2))


class TestExtractFragments:
    def test_two_runs(self):
        assert extract_fragments(track([0.9, 0.9, 0.1, 0.8]), 0.5) == [Fragment(0, 1), Fragment(3, 3)]

    def test_single_run(self):
        assert extract_fragments(track([0.9, 0.9, 0.9]), 0.5) == [Fragment(0, 2)]

    def test_none(self):
        assert extract_fragments(track([0.1, 0.1]), 0.5) == []

    def test_threshold_is_inclusive(self):
        assert extract_fragments(track([0.5, 0.4]), 0.5) == [Fragment(0, 0)]

    @given(scores_st, st.sampled_from(DEFAULT_TAUS))
    def test_maximal_runs(self, scores, tau):
        frags = extract_fragments(track(scores), tau)
        assert [tuple(f) for f in frags] == ref_fragments(scores, tau)
        for f in frags:
            assert all(s >= tau for s in scores[f.first:f.last + 1])
            if f.first > 0:
                assert scores[f.first - 1] < tau
            if f.last + 1 < len(scores):
                assert scores[f.last + 1] < tau

    @given(scores_st, st.sampled_from(DEFAULT_TAUS), st.sampled_from(DEFAULT_TAUS))
    def test_coverage_shrinks_with_tau(self, scores, t1, t2):
        lo, hi = sorted((t1, t2))

        def cover(t):
            return {i for f in extract_fragments(track(scores), t) for i in range(f.first, f.last + 1)}

        assert cover(hi) <= cover(lo)


class TestGrow:
    def _grow(self, scores, gamma, tau=0.5, start=0):
        tr = track(scores)
        return grow_from_fragment(extract_fragments(tr, tau), start, tau, gamma, tr)

    def test_zero_tolerance_stops_at_gap(self):
        assert self._grow([1, 1, 0, 1], 0.0) == Fragment(0, 1)

    def test_absorbs_small_gap(self):
        # tentative region 0..5 has 1 low snippet of 6 -> 0.167 <= 0.2
        assert self._grow([1, 1, 0, 1, 1, 1], 0.2) == Fragment(0, 5)

    def test_rejects_large_gap(self):
        # tentative region 0..4 has 3 low snippets of 5 -> 0.6 > 0.2
        assert self._grow([1, 0, 0, 0, 1], 0.2) == Fragment(0, 0)

    def test_stops_at_first_rejection(self):
        # 0..4: 3/5 = 0.6 rejected even though 0..11 would be 4/12 = 0.33
        scores = [1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1]
        assert self._grow(scores, 0.35) == Fragment(0, 0)

    @settings(max_examples=200)
    @given(scores_st, st.sampled_from(DEFAULT_TAUS), st.sampled_from(DEFAULT_GAMMAS))
    def test_scalar_matches_reference(self, scores, tau, gamma):
        tr = track(scores)
        frags = extract_fragments(tr, tau)
        for k in range(len(frags)):
            got = grow_from_fragment(frags, k, tau, gamma, tr)
            assert tuple(got) == ref_grow(scores, [tuple(f) for f in frags], k, tau, gamma)

    @settings(max_examples=200)
    @given(scores_st, st.sampled_from(DEFAULT_TAUS))
    def test_grow_all_matches_reference(self, scores, tau):
        got = grow_all(track(scores), tau, DEFAULT_GAMMAS)
        cells = ref_tag_cells(scores, [tau], DEFAULT_GAMMAS)
        for gamma in DEFAULT_GAMMAS:
            assert {tuple(f) for f in got[gamma]} == cells[(tau, gamma)]

    @given(scores_st, st.sampled_from(DEFAULT_TAUS))
    def test_monotone_in_gamma(self, scores, tau):
        grown = grow_all(track(scores), tau, DEFAULT_GAMMAS)
        for g1, g2 in zip(DEFAULT_GAMMAS, DEFAULT_GAMMAS[1:]):
            for r1, r2 in zip(grown[g1], grown[g2]):
                assert r1.first == r2.first and r2.last >= r1.last

    @given(scores_st, st.sampled_from(DEFAULT_TAUS), st.sampled_from(DEFAULT_GAMMAS))
    def test_region_invariants(self, scores, tau, gamma):
        for r in grow_all(track(scores), tau, [gamma])[gamma]:
            assert scores[r.first] >= tau and scores[r.last] >= tau
            low = sum(1 for s in scores[r.first:r.last + 1] if s < tau)
            assert low / (r.last - r.first + 1) <= gamma

    @given(scores_st, st.sampled_from(DEFAULT_TAUS))
    def test_zero_gamma_is_fragment_set(self, scores, tau):
        tr = track(scores)
        assert grow_all(tr, tau, [0.0])[0.0] == extract_fragments(tr, tau)


class TestTagPropose:
    def test_saturated_track_single_proposal(self):
        tr = track([0.95] * 30, stride=0.5)
        props = tag_propose(tr)
        assert len(props) == 1
        assert (props[0].start, props[0].end) == (0.0, 15.0)

    def test_empty_track(self):
        assert tag_propose(track([0.0] * 20)) == []

    @pytest.mark.parametrize("seed", range(30))
    def test_regions_match_reference(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(size=int(rng.integers(1, 65)))
        got = {tuple(r) for r in tag_regions(track(scores))}
        assert got == ref_tag_regions(scores.tolist(), DEFAULT_TAUS, DEFAULT_GAMMAS)

    @settings(max_examples=50, deadline=None)
    @given(scores_st)
    def test_dedup_leaves_no_near_duplicates(self, scores):
        props = tag_propose(track(scores))
        assert props == sorted(props)
        for i, a in enumerate(props):
            for b in props[i + 1:]:
                assert iou(a, b) <= 0.95

    def test_proposals_are_grown_regions(self):
        rng = np.random.default_rng(5)
        tr = track(rng.uniform(size=60), stride=0.25)
        regions = {tr.to_interval(r.first, r.last) for r in tag_regions(tr)}
        assert set(tag_propose(tr)) <= regions


class TestSlidingWindows:
    def test_hand_enumeration(self):
        wins = sliding_windows(1.0, num_scales=2, base_length=0.3, step_ratio=0.4)
        short = [(round(w.start, 9), round(w.end, 9)) for w in wins if abs(w.duration() - 0.3) < 1e-9]
        long = [(round(w.start, 9), round(w.end, 9)) for w in wins if abs(w.duration() - 0.6) < 1e-9]
        assert short == [(0.0, 0.3), (0.12, 0.42), (0.24, 0.54), (0.36, 0.66), (0.48, 0.78), (0.6, 0.9), (0.7, 1.0)]
        assert long == [(0.0, 0.6), (0.24, 0.84), (0.4, 1.0)]

    def test_too_short_video(self):
        assert sliding_windows(0.2, base_length=0.3) == []

    def test_no_flush_duplicate(self):
        wins = sliding_windows(1.0, num_scales=1, base_length=0.5, step_ratio=0.5)
        assert [(w.start, w.end) for w in wins] == [(0.0, 0.5), (0.25, 0.75), (0.5, 1.0)]

    def test_rejects_bad_duration(self):
        with pytest.raises(ValueError):
            sliding_windows(0.0)

    @given(st.floats(0.1, 500.0))
    def test_containment(self, total):
        for w in sliding_windows(total):
            assert 0.0 <= w.start and w.end <= total

    def test_default_scale_count(self):
        # coarse step keeps the window count small while every scale fits
        wins = sliding_windows(2e5, step_ratio=1000.0)
        lengths = sorted({round(w.duration(), 6) for w in wins})
        assert len(lengths) == 20
        assert lengths[0] == 0.3 and lengths[-1] == round(0.3 * 2 ** 19, 6)
