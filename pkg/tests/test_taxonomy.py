from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from antkit.errors import DuplicateLabel, InvalidLabel
from antkit.taxonomy import (
    ActionLabel,
    LabelRendering,
    build_taxonomy,
    indices_rendering,
    load_taxonomy,
    normalize_label,
    render_sequence,
    save_taxonomy,
    shuffle_mapping,
)


class TestNormalizeLabel:
    def test_multiword_takes_first_word(self):
        assert normalize_label("turn-on", set()) == "turn"

    def test_first_unique_word_skips_taken(self):
        # hand-applied rule over the split ["turn", "off"]
        assert normalize_label("turn-off", {"turn"}) == "off"

    def test_single_word_untouched(self):
        assert normalize_label("x", set()) == "x"

    def test_parentheses_and_spaces_split(self):
        assert normalize_label("put (down)", {"put"}) == "down"

    def test_all_taken_gets_integer_suffix(self):
        assert normalize_label("turn-on", {"turn", "on"}) == "turn1"
        assert normalize_label("turn-on", {"turn", "on", "turn1"}) == "turn2"

    def test_empty_raises(self):
        with pytest.raises(InvalidLabel):
            normalize_label("", set())
        with pytest.raises(InvalidLabel):
            normalize_label("   ", set())

    @given(st.text(alphabet="abc-() ", min_size=1), st.sets(st.text("ab", max_size=2)))
    def test_deterministic_and_single_word(self, raw, taken):
        try:
            first = normalize_label(raw, taken)
        except InvalidLabel:
            return
        assert first == normalize_label(raw, taken)
        assert first not in taken
        assert len(first.split()) == 1


class TestBuildTaxonomy:
    def test_single_words_pass_through(self):
        tax = build_taxonomy(["open", "close"], ["door"])
        assert tax.display_verb == ("open", "close")
        assert tax.display_noun == ("door",)

    def test_sequential_normalization(self):
        # hand-apply normalize_label in list order
        tax = build_taxonomy(["turn-on", "turn-off"], ["coconut"])
        assert tax.display_verb == ("turn", "off")

    def test_empty_class_rejected(self):
        with pytest.raises(InvalidLabel):
            build_taxonomy([], ["x"])

    def test_duplicates_rejected(self):
        with pytest.raises(DuplicateLabel):
            build_taxonomy(["open", "open"], ["door"])

    def test_display_overrides(self):
        tax = build_taxonomy(
            ["turn-on"], ["door"], display_overrides={"verbs": {"turn-on": "ton"}}
        )
        assert tax.display_verb == ("ton",)

    def test_displays_unique_and_single_word(self, tiny_taxonomy):
        for displays in (tiny_taxonomy.display_verb, tiny_taxonomy.display_noun):
            assert len(set(displays)) == len(displays)
            assert all(len(word.split()) == 1 for word in displays)

    def test_serialization_round_trip(self, tmp_path, tiny_taxonomy):
        path = tmp_path / "tax.json"
        save_taxonomy(tiny_taxonomy, path)
        again = load_taxonomy(path)
        assert again == tiny_taxonomy
        assert again.fingerprint() == tiny_taxonomy.fingerprint()
        # a second round trip is byte-stable
        save_taxonomy(again, tmp_path / "tax2.json")
        assert (tmp_path / "tax2.json").read_bytes() == path.read_bytes()


class TestRenderSequence:
    def test_canonical_single_action(self, tiny_taxonomy):
        text = render_sequence([ActionLabel(0, 0)], tiny_taxonomy)
        assert text == "open door"

    def test_canonical_joins_with_commas(self, tiny_taxonomy):
        text = render_sequence([ActionLabel(0, 0), ActionLabel(1, 0)], tiny_taxonomy)
        assert text == "open door, close door"

    def test_indices_format(self, two_by_one_taxonomy):
        text = render_sequence(
            [ActionLabel(0, 0), ActionLabel(1, 0)], two_by_one_taxonomy, indices_rendering()
        )
        assert text == "0 0, 1 0"

    def test_out_of_range_rejected(self, two_by_one_taxonomy):
        with pytest.raises(InvalidLabel):
            render_sequence([ActionLabel(5, 0)], two_by_one_taxonomy)

    def test_shuffled_equals_applying_bijection(self, tiny_taxonomy):
        rendering = shuffle_mapping(tiny_taxonomy, seed=5)
        label = ActionLabel(2, 3)
        text = render_sequence([label], tiny_taxonomy, rendering)
        mapped = rendering.map_label(label)
        expected = (
            f"{tiny_taxonomy.display_verb[mapped.verb_id]} "
            f"{tiny_taxonomy.display_noun[mapped.noun_id]}"
        )
        assert text == expected


class TestShuffleMapping:
    def test_deterministic_per_seed(self, tiny_taxonomy):
        assert shuffle_mapping(tiny_taxonomy, 0) == shuffle_mapping(tiny_taxonomy, 0)
        assert shuffle_mapping(tiny_taxonomy, 0) != shuffle_mapping(tiny_taxonomy, 1)

    def test_composition_with_inverse_is_identity(self, tiny_taxonomy):
        rendering = shuffle_mapping(tiny_taxonomy, 3)
        inverse = rendering.inverse()
        for verb_id in range(tiny_taxonomy.n_verbs):
            for noun_id in range(tiny_taxonomy.n_nouns):
                label = ActionLabel(verb_id, noun_id)
                assert inverse.map_label(rendering.map_label(label)) == label

    def test_seed0_matches_documented_fisher_yates_walk(self):
        # independently re-walk backward Fisher-Yates for |V| = 3
        tax = build_taxonomy(["a", "b", "c"], ["x", "y", "z"])
        rng = random.Random(0)
        expected_verbs = [0, 1, 2]
        for i in (2, 1):
            j = rng.randrange(i + 1)
            expected_verbs[i], expected_verbs[j] = expected_verbs[j], expected_verbs[i]
        expected_nouns = [0, 1, 2]
        for i in (2, 1):
            j = rng.randrange(i + 1)
            expected_nouns[i], expected_nouns[j] = expected_nouns[j], expected_nouns[i]
        rendering = shuffle_mapping(tax, 0)
        assert rendering.verb_map == tuple(expected_verbs)
        assert rendering.noun_map == tuple(expected_nouns)

    def test_maps_are_bijections(self, tiny_taxonomy):
        rendering = shuffle_mapping(tiny_taxonomy, 11)
        assert sorted(rendering.verb_map) == list(range(tiny_taxonomy.n_verbs))
        assert sorted(rendering.noun_map) == list(range(tiny_taxonomy.n_nouns))

    def test_rendering_serialization(self, tiny_taxonomy):
        rendering = shuffle_mapping(tiny_taxonomy, 9)
        data = json.loads(json.dumps(rendering.to_dict()))
        assert data == {"mode": "shuffled", "seed": 9}
        again = LabelRendering.from_dict(data, tiny_taxonomy)
        assert again == rendering

    def test_non_bijection_rejected(self):
        with pytest.raises(InvalidLabel):
            LabelRendering("shuffled", 0, (0, 0), (0, 1))
