"""Verb/noun vocabularies, label normalization, and alternative label renderings.

A taxonomy owns two ordered vocabularies (verbs and nouns). Each canonical
label gets a normalized single-word display form so that rendered action
sequences tokenize cleanly; multi-word labels such as "turn-on" are reduced
to their first word not already used by another label of the same class.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicateLabel, InvalidLabel

_SPLIT_RE = re.compile(r"[\s\-()]+")

CANONICAL = "canonical"
SHUFFLED = "shuffled"
INDICES = "indices"


def normalize_label(raw: str, taken: set[str]) -> str:
    """Reduce a raw label to a single word not present in ``taken``.

    Words are split on whitespace, hyphens, and parentheses. The first word
    not in ``taken`` wins; if every word is taken, the first word gets the
    smallest positive integer suffix that makes it unique.
    """
    if not raw or not raw.strip():
        raise InvalidLabel("empty label")
    words = [w for w in _SPLIT_RE.split(raw) if w]
    if not words:
        raise InvalidLabel(f"label {raw!r} contains no words")
    for word in words:
        if word not in taken:
            return word
    base = words[0]
    k = 1
    while f"{base}{k}" in taken:
        k += 1
    return f"{base}{k}"


@dataclass(frozen=True)
class ActionLabel:
    """A (verb, noun) pair referencing a fixed taxonomy by index."""

    verb_id: int
    noun_id: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.verb_id, self.noun_id)


@dataclass(frozen=True)
class Taxonomy:
    """Immutable verb/noun vocabularies with single-word display forms."""

    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    display_verb: tuple[str, ...]
    display_noun: tuple[str, ...]
    _verb_display_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)
    _noun_display_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "_verb_display_index", {w.lower(): i for i, w in enumerate(self.display_verb)}
        )
        object.__setattr__(
            self, "_noun_display_index", {w.lower(): i for i, w in enumerate(self.display_noun)}
        )

    @property
    def n_verbs(self) -> int:
        return len(self.verbs)

    @property
    def n_nouns(self) -> int:
        return len(self.nouns)

    @property
    def n_actions(self) -> int:
        return len(self.verbs) * len(self.nouns)

    def action_id(self, label: ActionLabel) -> int:
        """Composite id for a (verb, noun) pair: verb_id * n_nouns + noun_id."""
        self.check_label(label)
        return label.verb_id * self.n_nouns + label.noun_id

    def label_of(self, action_id: int) -> ActionLabel:
        if not 0 <= action_id < self.n_actions:
            raise InvalidLabel(f"action id {action_id} out of range")
        verb_id, noun_id = divmod(action_id, self.n_nouns)
        return ActionLabel(verb_id, noun_id)

    def check_label(self, label: ActionLabel) -> None:
        if not 0 <= label.verb_id < self.n_verbs:
            raise InvalidLabel(f"verb id {label.verb_id} out of range")
        if not 0 <= label.noun_id < self.n_nouns:
            raise InvalidLabel(f"noun id {label.noun_id} out of range")

    def verb_id_of(self, name: str) -> int:
        try:
            return self.verbs.index(name)
        except ValueError:
            raise InvalidLabel(f"unknown verb {name!r}") from None

    def noun_id_of(self, name: str) -> int:
        try:
            return self.nouns.index(name)
        except ValueError:
            raise InvalidLabel(f"unknown noun {name!r}") from None

    def display_verb_id(self, word: str) -> int | None:
        """Id of an exact display-verb match (case-insensitive), else None."""
        return self._verb_display_index.get(word.lower())

    def display_noun_id(self, word: str) -> int | None:
        return self._noun_display_index.get(word.lower())

    def fingerprint(self) -> str:
        """Stable content hash binding checkpoints and reports to this taxonomy."""
        payload = json.dumps(
            {
                "verbs": list(self.verbs),
                "nouns": list(self.nouns),
                "display_verb": list(self.display_verb),
                "display_noun": list(self.display_noun),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "verbs": list(self.verbs),
            "nouns": list(self.nouns),
            "display": {
                "verbs": {v: d for v, d in zip(self.verbs, self.display_verb)},
                "nouns": {n: d for n, d in zip(self.nouns, self.display_noun)},
            },
        }


def _build_displays(labels: Sequence[str], overrides: dict[str, str] | None) -> list[str]:
    overrides = overrides or {}
    taken: set[str] = set()
    displays = []
    for raw in labels:
        if raw in overrides:
            word = overrides[raw]
            if not word or len(word.split()) != 1:
                raise InvalidLabel(f"display override {word!r} for {raw!r} is not one word")
            if word in taken:
                raise DuplicateLabel(f"display override {word!r} already used")
        else:
            word = normalize_label(raw, taken)
        taken.add(word)
        displays.append(word)
    return displays


def build_taxonomy(
    verb_list: Sequence[str],
    noun_list: Sequence[str],
    display_overrides: dict | None = None,
) -> Taxonomy:
    """Build a taxonomy from canonical label lists.

    Display maps are populated by applying :func:`normalize_label` in list
    order with per-class taken sets. ``display_overrides`` may carry
    ``{"verbs": {...}, "nouns": {...}}`` maps of canonical label to display word.
    """
    if not verb_list:
        raise InvalidLabel("verb list is empty")
    if not noun_list:
        raise InvalidLabel("noun list is empty")
    if len(set(verb_list)) != len(verb_list):
        raise DuplicateLabel("duplicate verbs")
    if len(set(noun_list)) != len(noun_list):
        raise DuplicateLabel("duplicate nouns")
    overrides = display_overrides or {}
    return Taxonomy(
        verbs=tuple(verb_list),
        nouns=tuple(noun_list),
        display_verb=tuple(_build_displays(verb_list, overrides.get("verbs"))),
        display_noun=tuple(_build_displays(noun_list, overrides.get("nouns"))),
    )


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(taxonomy.to_dict(), indent=2, sort_keys=True) + "\n")


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load a taxonomy JSON file: ``{"verbs": [...], "nouns": [...]}``.

    An optional ``"display"`` key carries per-label display overrides.
    """
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "verbs" not in data or "nouns" not in data:
        raise InvalidLabel(f"{path}: expected a JSON object with 'verbs' and 'nouns'")
    return build_taxonomy(data["verbs"], data["nouns"], data.get("display"))


@dataclass(frozen=True)
class LabelRendering:
    """How action labels are rendered to text.

    ``verb_map``/``noun_map`` are bijections over vocabulary ids (identity for
    the canonical and index modes). Rendering through the maps and then
    applying :meth:`inverse` recovers the original ids.
    """

    mode: str
    seed: int | None = None
    verb_map: tuple[int, ...] = ()
    noun_map: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in (CANONICAL, SHUFFLED, INDICES):
            raise InvalidLabel(f"unknown rendering mode {self.mode!r}")
        for name, perm in (("verb_map", self.verb_map), ("noun_map", self.noun_map)):
            if perm and sorted(perm) != list(range(len(perm))):
                raise InvalidLabel(f"{name} is not a bijection")

    def map_label(self, label: ActionLabel) -> ActionLabel:
        if self.mode != SHUFFLED:
            return label
        return ActionLabel(self.verb_map[label.verb_id], self.noun_map[label.noun_id])

    def inverse(self) -> "LabelRendering":
        if self.mode != SHUFFLED:
            return self
        inv_v = [0] * len(self.verb_map)
        inv_n = [0] * len(self.noun_map)
        for i, j in enumerate(self.verb_map):
            inv_v[j] = i
        for i, j in enumerate(self.noun_map):
            inv_n[j] = i
        return LabelRendering(SHUFFLED, self.seed, tuple(inv_v), tuple(inv_n))

    def to_dict(self) -> dict:
        if self.mode == SHUFFLED:
            return {"mode": self.mode, "seed": self.seed}
        return {"mode": self.mode}

    @staticmethod
    def from_dict(data: dict, taxonomy: Taxonomy) -> "LabelRendering":
        mode = data.get("mode", CANONICAL)
        if mode == SHUFFLED:
            return shuffle_mapping(taxonomy, int(data["seed"]))
        return LabelRendering(mode)


def canonical_rendering() -> LabelRendering:
    return LabelRendering(CANONICAL)


def indices_rendering() -> LabelRendering:
    return LabelRendering(INDICES)


def _fisher_yates(n: int, rng: random.Random) -> tuple[int, ...]:
    # Backward Fisher-Yates: i from n-1 down to 1, j = randrange(i+1), swap.
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randrange(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


def shuffle_mapping(taxonomy: Taxonomy, seed: int) -> LabelRendering:
    """Seeded uniform permutation of each vocabulary (fixed points allowed).

    The verb permutation is drawn first, then the noun permutation, from a
    single ``random.Random(seed)`` stream via backward Fisher-Yates.
    """
    rng = random.Random(seed)
    verb_map = _fisher_yates(taxonomy.n_verbs, rng)
    noun_map = _fisher_yates(taxonomy.n_nouns, rng)
    return LabelRendering(SHUFFLED, seed, verb_map, noun_map)


def render_action(label: ActionLabel, taxonomy: Taxonomy, rendering: LabelRendering) -> str:
    taxonomy.check_label(label)
    if rendering.mode == INDICES:
        return f"{label.verb_id} {label.noun_id}"
    mapped = rendering.map_label(label)
    return f"{taxonomy.display_verb[mapped.verb_id]} {taxonomy.display_noun[mapped.noun_id]}"


def render_sequence(
    labels: Iterable[ActionLabel],
    taxonomy: Taxonomy,
    rendering: LabelRendering | None = None,
) -> str:
    """Render labels as ``"verb noun, verb noun, ..."`` text.

    Canonical mode emits display words; shuffled mode pushes ids through the
    rendering bijections first; index mode emits ``"verb_id noun_id"`` pairs.
    """
    rendering = rendering or canonical_rendering()
    return ", ".join(render_action(label, taxonomy, rendering) for label in labels)
