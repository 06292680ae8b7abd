from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from antkit.errors import MissingPrediction, ShapeError
from antkit.metrics import (
    CandidateSet,
    average_precision,
    damerau_levenshtein,
    ed_at_z,
    evaluate_lta,
    levenshtein,
    mean_ap,
    project,
)
from antkit.taxonomy import ActionLabel
from oracles import edit_script_oracle


def labels(*pairs):
    return tuple(ActionLabel(v, n) for v, n in pairs)


class TestDamerauLevenshtein:
    def test_insertions_only(self):
        assert damerau_levenshtein([], ["x", "y"]) == 2

    def test_single_transposition(self):
        assert damerau_levenshtein(["a", "b"], ["b", "a"]) == 1

    def test_known_string_values(self):
        assert damerau_levenshtein(tuple("kitten"), tuple("sitting")) == 3
        assert damerau_levenshtein(tuple("kitten"), tuple("kittne")) == 1
        assert damerau_levenshtein((), ()) == 0

    def test_osa_differs_from_unrestricted_variant(self):
        # the canonical case: "ca" -> "abc" is 2 unrestricted, 3 under OSA
        assert damerau_levenshtein(tuple("ca"), tuple("abc")) == 3
        assert damerau_levenshtein(tuple("ca"), tuple("abc"), variant="dl") == 2

    def test_matches_edit_script_oracle_on_random_pairs(self):
        rng = random.Random(42)
        for _ in range(1000):
            a = [rng.randrange(4) for _ in range(rng.randrange(9))]
            b = [rng.randrange(4) for _ in range(rng.randrange(9))]
            assert damerau_levenshtein(a, b) == edit_script_oracle(a, b)

    def test_unrestricted_variant_matches_string_space_search(self):
        # oracle: breadth-first search over whole strings, applying every
        # possible single edit, with no alignment structure at all
        def string_bfs(a, b, alphabet):
            a, b = tuple(a), tuple(b)
            limit = max(len(a), len(b)) + 1
            frontier, seen = {a}, {a}
            depth = 0
            while b not in frontier:
                depth += 1
                next_frontier = set()
                for s in frontier:
                    neighbors = []
                    for i in range(len(s)):
                        neighbors.append(s[:i] + s[i + 1 :])  # delete
                        for c in alphabet:
                            neighbors.append(s[:i] + (c,) + s[i + 1 :])  # substitute
                    for i in range(len(s) + 1):
                        if len(s) < limit:
                            for c in alphabet:
                                neighbors.append(s[:i] + (c,) + s[i:])  # insert
                    for i in range(len(s) - 1):
                        neighbors.append(
                            s[:i] + (s[i + 1], s[i]) + s[i + 2 :]
                        )  # transpose
                    for n in neighbors:
                        if n not in seen:
                            seen.add(n)
                            next_frontier.add(n)
                frontier = next_frontier
            return depth

        rng = random.Random(8)
        for _ in range(60):
            a = [rng.randrange(3) for _ in range(rng.randrange(5))]
            b = [rng.randrange(3) for _ in range(rng.randrange(5))]
            assert damerau_levenshtein(a, b, variant="dl") == string_bfs(a, b, range(3))

    @given(
        st.lists(st.integers(0, 3), max_size=8),
        st.lists(st.integers(0, 3), max_size=8),
    )
    def test_metric_properties(self, a, b):
        d = damerau_levenshtein(a, b)
        assert d == damerau_levenshtein(b, a)
        assert (d == 0) == (a == b)
        assert d <= len(a) + len(b)

    def test_levenshtein_ignores_transpositions(self):
        assert levenshtein(["a", "b"], ["b", "a"]) == 2

    def test_levenshtein_word_distances(self):
        # values recomputed with a plain recursive oracle; "brush" is nearer
        # to "paintbrush" than "pen" is (5 < 8)
        assert levenshtein("paintbrush", "brush") == 5
        assert levenshtein("paintbrush", "pen") == 8


class TestEdAtZ:
    def test_exact_candidate_scores_zero(self):
        gt = labels((0, 0), (1, 1), (2, 2))
        wrong = labels((3, 3), (3, 3), (3, 3))
        candidates = CandidateSet.from_lists([wrong, gt, wrong, wrong, wrong])
        for channel in ("verb", "noun", "action"):
            assert ed_at_z(candidates, gt, channel) == 0.0

    def test_thirteen_substitutions_of_twenty(self):
        # candidate differs from gt in 13 positions; tokens are all distinct
        # so no transposition helps; verified against the oracle
        gt = labels(*[(i, i) for i in range(20)])
        cand = list(gt)
        for i in range(13):
            cand[i] = ActionLabel(30 + i, 30 + i)
        assert edit_script_oracle(project(cand, "action"), project(gt, "action")) == 13
        candidates = CandidateSet.from_lists([cand])
        assert ed_at_z(candidates, gt, "action") == pytest.approx(0.65)

    def test_all_wrong_single_candidate(self):
        gt = labels(*[(0, 0)] * 20)
        cand = labels(*[(1, 1)] * 20)
        assert ed_at_z(CandidateSet.from_lists([cand]), gt, "action") == 1.0

    def test_length_mismatch_raises(self):
        candidates = CandidateSet.from_lists([labels((0, 0))])
        with pytest.raises(ShapeError):
            ed_at_z(candidates, labels((0, 0), (1, 1)), "verb")

    def test_monotone_in_appended_candidates(self):
        rng = random.Random(7)
        for _ in range(100):
            z = rng.randrange(1, 6)
            gt = labels(*[(rng.randrange(3), rng.randrange(3)) for _ in range(z)])
            seqs = [
                labels(*[(rng.randrange(3), rng.randrange(3)) for _ in range(z)])
                for _ in range(rng.randrange(1, 4))
            ]
            candidates = CandidateSet.from_lists(seqs)
            extra = labels(*[(rng.randrange(3), rng.randrange(3)) for _ in range(z)])
            grown = candidates.appended(extra)
            for channel in ("verb", "noun", "action"):
                assert ed_at_z(grown, gt, channel) <= ed_at_z(candidates, gt, channel)

    def test_maxlen_normalization_flag(self):
        # candidate and target lengths always agree, so the alternative
        # denominator coincides with Z; the flag is part of the interface
        gt = labels((0, 0), (1, 1))
        cand = labels((0, 0), (2, 2))
        candidates = CandidateSet.from_lists([cand])
        assert ed_at_z(candidates, gt, "action", normalize="maxlen") == ed_at_z(
            candidates, gt, "action", normalize="z"
        )

    def test_channels_project_independently(self):
        gt = labels((0, 0), (1, 1))
        cand = labels((0, 5), (1, 4))  # verbs right, nouns wrong
        candidates = CandidateSet.from_lists([cand])
        assert ed_at_z(candidates, gt, "verb") == 0.0
        assert ed_at_z(candidates, gt, "noun") == 1.0
        assert ed_at_z(candidates, gt, "action") == 1.0


class TestEvaluateLta:
    def test_exact_predictions_score_zero(self):
        gt = labels((0, 0), (1, 1))
        preds = {"a": CandidateSet.from_lists([gt]), "b": CandidateSet.from_lists([gt])}
        report = evaluate_lta(preds, {"a": gt, "b": gt})
        assert (report.verb_ed, report.noun_ed, report.action_ed) == (0.0, 0.0, 0.0)

    def test_mean_over_instances(self):
        gt = labels(*[(i, i) for i in range(10)])
        def with_errors(k):
            cand = list(gt)
            for i in range(k):
                cand[i] = ActionLabel(15, 15)
            return CandidateSet.from_lists([cand])
        report = evaluate_lta(
            {"a": with_errors(2), "b": with_errors(4)}, {"a": gt, "b": gt}
        )
        assert report.action_ed == pytest.approx(0.3)

    def test_missing_prediction_raises(self):
        gt = labels((0, 0))
        with pytest.raises(MissingPrediction):
            evaluate_lta({}, {"a": gt})

    def test_random_predictions_match_independent_scorer(self):
        # second implementation straight from the metric definition, using
        # the BFS oracle distance instead of the DP
        rng = random.Random(123)
        z, k = 6, 3
        preds, gts = {}, {}
        for idx in range(1000):
            gts[str(idx)] = labels(*[(rng.randrange(2), rng.randrange(2)) for _ in range(z)])
            preds[str(idx)] = CandidateSet.from_lists(
                [
                    labels(*[(rng.randrange(2), rng.randrange(2)) for _ in range(z)])
                    for _ in range(k)
                ]
            )
        report = evaluate_lta(preds, gts)
        oracle_verb = sum(
            min(
                edit_script_oracle(project(seq, "verb"), project(gts[i], "verb"))
                for seq in preds[i].sequences
            )
            / z
            for i in gts
        ) / len(gts)
        assert report.verb_ed == pytest.approx(oracle_verb, abs=0.02)

    def test_bijective_relabeling_preserves_report(self, tiny_taxonomy):
        from antkit.taxonomy import shuffle_mapping

        rng = random.Random(5)
        rendering = shuffle_mapping(tiny_taxonomy, 17)
        z = 5
        gts, preds, gts_m, preds_m = {}, {}, {}, {}
        for idx in range(50):
            gt = labels(*[(rng.randrange(6), rng.randrange(6)) for _ in range(z)])
            seqs = [
                labels(*[(rng.randrange(6), rng.randrange(6)) for _ in range(z)])
                for _ in range(3)
            ]
            gts[str(idx)] = gt
            preds[str(idx)] = CandidateSet.from_lists(seqs)
            gts_m[str(idx)] = tuple(rendering.map_label(l) for l in gt)
            preds_m[str(idx)] = CandidateSet.from_lists(
                [tuple(rendering.map_label(l) for l in seq) for seq in seqs]
            )
        assert evaluate_lta(preds, gts) == evaluate_lta(preds_m, gts_m)


class TestMeanAp:
    def test_perfect_ranking_is_100(self):
        scores = {
            0: [(0.9, True), (0.1, False)],
            1: [(0.8, True), (0.7, True), (0.2, False)],
        }
        report = mean_ap(scores, freq_threshold=1, train_counts={0: 5, 1: 0})
        assert report.all_map == pytest.approx(100.0)
        assert report.freq_set == (0,)
        assert report.rare_set == (1,)

    def test_hand_ranked_ap(self):
        # ranks: 0.9+ (P=1/1), 0.8- , 0.7+ (P=2/3); AP = (1 + 2/3) / 2
        ap = average_precision([(0.9, True), (0.8, False), (0.7, True)])
        assert ap == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)

    def test_positive_below_nine_negatives(self):
        ranked = [(0.99 - 0.01 * i, False) for i in range(9)] + [(0.5, True)]
        assert average_precision(ranked) == pytest.approx(0.1)
        report = mean_ap({0: ranked}, freq_threshold=1)
        assert report.all_map == pytest.approx(10.0)

    def test_zero_positive_class_excluded_and_listed(self):
        scores = {0: [(0.9, True)], 1: [(0.4, False)]}
        report = mean_ap(scores, freq_threshold=1)
        assert report.excluded == (1,)
        assert report.all_map == pytest.approx(100.0)

    def test_invariant_under_monotone_score_transform(self):
        rng = random.Random(3)
        scores = {
            c: [(rng.random(), rng.random() < 0.4) for _ in range(30)] for c in range(4)
        }
        transformed = {
            c: [(3.0 * s**3 + 1.0, t) for s, t in ranked] for c, ranked in scores.items()
        }
        try:
            base = mean_ap(scores, freq_threshold=1)
        except ShapeError:
            return
        assert mean_ap(transformed, freq_threshold=1).all_map == pytest.approx(base.all_map)

    def test_partition_is_disjoint_union(self):
        rng = random.Random(9)
        scores = {
            c: [(rng.random(), rng.random() < 0.5) for _ in range(20)] for c in range(6)
        }
        counts = {c: rng.randrange(20) for c in range(6)}
        report = mean_ap(scores, freq_threshold=10, train_counts=counts)
        evaluated = set(report.freq_set) | set(report.rare_set)
        assert evaluated | set(report.excluded) == set(range(6))
        assert not (set(report.freq_set) & set(report.rare_set))


class TestCandidateSet:
    def test_needs_one_sequence(self):
        with pytest.raises(ShapeError):
            CandidateSet.from_lists([])

    def test_unequal_lengths_rejected(self):
        with pytest.raises(ShapeError):
            CandidateSet.from_lists([labels((0, 0)), labels((0, 0), (1, 1))])
