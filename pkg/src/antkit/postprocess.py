"""Repair of raw language-model completions into valid candidate sequences.

Parsing is total: any input text yields a well-formed length-Z sequence of
in-vocabulary labels plus a record of what went wrong. Malformations fall
into five incident categories: a sequence shorter or longer than expected, an
item that is not a verb-noun pair, and out-of-vocabulary verbs or nouns.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InvalidLabel
from .metrics import CandidateSet, levenshtein
from .taxonomy import ActionLabel, Taxonomy

SHORT_SEQ = "Short Seq"
LONG_SEQ = "Long Seq"
INVALID_SEQ = "Invalid Seq"
INVALID_VERB = "Invalid Verb"
INVALID_NOUN = "Invalid Noun"
INCIDENT_CATEGORIES = (SHORT_SEQ, LONG_SEQ, INVALID_SEQ, INVALID_VERB, INVALID_NOUN)

DEFAULT_MAP_THRESHOLD = 3


def nearest_vocab(word: str, vocabulary: Sequence[str]) -> int:
    """Id of the vocabulary entry closest to ``word`` by Levenshtein distance.

    Distances are computed case-insensitively; ties break toward the lowest id.
    """
    idx, _ = _nearest(word, vocabulary)
    return idx


def _nearest(word: str, vocabulary: Sequence[str]) -> tuple[int, int]:
    if not vocabulary:
        raise InvalidLabel("empty vocabulary")
    lowered = word.lower()
    best_id, best_dist = 0, None
    for idx, entry in enumerate(vocabulary):
        dist = levenshtein(lowered, entry.lower())
        if best_dist is None or dist < best_dist:
            best_id, best_dist = idx, dist
            if dist == 0:
                break
    return best_id, best_dist


@dataclass
class ParseOutcome:
    """What a completion parsed into, pre- and post-repair."""

    actions: list[tuple[str, str]]
    incidents: Counter
    mapped: list[ActionLabel]
    repaired: list[ActionLabel] = field(default_factory=list)


def parse_action_sequence(
    text: str,
    z: int,
    taxonomy: Taxonomy,
    map_threshold: int = DEFAULT_MAP_THRESHOLD,
    strict: bool = False,
    newlines_as_commas: bool = True,
) -> ParseOutcome:
    """Split a completion into word-pair actions and classify malformations.

    Commas separate actions (newlines are first normalized to commas unless
    disabled); whitespace separates the words of an action. Items that are
    not exactly two words are dropped as invalid. Short/long flags compare
    the raw item count against ``z``. Out-of-vocabulary words are mapped to
    their nearest display form; in the default mode a word farther than
    ``map_threshold`` edits from the vocabulary drops the whole action as
    invalid, while ``strict=True`` maps every word unconditionally and keeps
    newlines intact.
    """
    incidents: Counter = Counter()
    if strict:
        newlines_as_commas = False
    if newlines_as_commas:
        text = text.replace("\n", ",")
    items = [item.strip() for item in text.split(",")]
    items = [item for item in items if item]
    if len(items) < z:
        incidents[SHORT_SEQ] += 1
    elif len(items) > z:
        incidents[LONG_SEQ] += 1

    actions: list[tuple[str, str]] = []
    mapped: list[ActionLabel] = []
    for item in items:
        words = item.split()
        if len(words) != 2:
            incidents[INVALID_SEQ] += 1
            continue
        verb_word, noun_word = words
        actions.append((verb_word, noun_word))
        verb_id = taxonomy.display_verb_id(verb_word)
        noun_id = taxonomy.display_noun_id(noun_word)
        item_incidents = []
        if verb_id is None:
            verb_id, dist = _nearest(verb_word, taxonomy.display_verb)
            if not strict and dist > map_threshold:
                incidents[INVALID_SEQ] += 1
                continue
            item_incidents.append(INVALID_VERB)
        if noun_id is None:
            noun_id, dist = _nearest(noun_word, taxonomy.display_noun)
            if not strict and dist > map_threshold:
                incidents[INVALID_SEQ] += 1
                continue
            item_incidents.append(INVALID_NOUN)
        for category in item_incidents:
            incidents[category] += 1
        mapped.append(ActionLabel(verb_id, noun_id))
    return ParseOutcome(actions=actions, incidents=incidents, mapped=mapped)


def repair_sequence(
    parsed: Sequence[ActionLabel], z: int, fallback: ActionLabel
) -> list[ActionLabel]:
    """Force a parsed sequence to exactly ``z`` labels.

    Overlong sequences are truncated; short ones are padded by repeating the
    last valid action. With no valid action at all, the fallback label is
    repeated (the all-invalid case has no principled answer, so the caller
    chooses the pad).
    """
    repaired = list(parsed[:z])
    if not repaired:
        return [fallback] * z
    while len(repaired) < z:
        repaired.append(repaired[-1])
    return repaired


@dataclass
class IncidentStats:
    """Per-category completion counts over a postprocessing run."""

    n_completions: int = 0
    flagged: Counter = field(default_factory=Counter)

    def record(self, incidents: Counter) -> None:
        self.n_completions += 1
        for category in INCIDENT_CATEGORIES:
            if incidents.get(category, 0) > 0:
                self.flagged[category] += 1

    def merge(self, other: "IncidentStats") -> None:
        self.n_completions += other.n_completions
        self.flagged.update(other.flagged)

    def percentages(self) -> dict[str, float]:
        if self.n_completions == 0:
            return {category: 0.0 for category in INCIDENT_CATEGORIES}
        return {
            category: 100.0 * self.flagged.get(category, 0) / self.n_completions
            for category in INCIDENT_CATEGORIES
        }

    def to_dict(self) -> dict:
        return {
            "n_completions": self.n_completions,
            "counts": {c: self.flagged.get(c, 0) for c in INCIDENT_CATEGORIES},
            "percent": self.percentages(),
        }


def postprocess_candidates(
    texts: Sequence[str],
    z: int,
    taxonomy: Taxonomy,
    fallback: ActionLabel,
    map_threshold: int = DEFAULT_MAP_THRESHOLD,
    strict: bool = False,
) -> tuple[CandidateSet, IncidentStats]:
    """Parse, map, and repair K completions into a valid candidate set."""
    if not texts:
        raise InvalidLabel("need at least one completion")
    taxonomy.check_label(fallback)
    stats = IncidentStats()
    sequences = []
    for text in texts:
        outcome = parse_action_sequence(
            text, z, taxonomy, map_threshold=map_threshold, strict=strict
        )
        outcome.repaired = repair_sequence(outcome.mapped, z, fallback)
        stats.record(outcome.incidents)
        sequences.append(outcome.repaired)
    return CandidateSet.from_lists(sequences), stats
