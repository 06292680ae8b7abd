"""Deterministic mock client and incident-planting fault suite."""

from __future__ import annotations

import hashlib
import random
from typing import Callable, Sequence

from ..errors import ConfigError
from ..postprocess import (
    INVALID_NOUN,
    INVALID_SEQ,
    INVALID_VERB,
    LONG_SEQ,
    SHORT_SEQ,
)
from ..taxonomy import ActionLabel, Taxonomy, render_sequence
from .client import LlmRequest, LlmResponse


class MockLlm:
    """Scripted stand-in for an endpoint; fully deterministic.

    Completions are looked up by exact prompt text, then by the prompt's
    sha256 hex digest, then produced by the ``handler`` callable, then fall
    back to ``default``. Fewer scripted completions than requested are padded
    by repeating the last one.
    """

    def __init__(
        self,
        script: dict[str, list[str]] | None = None,
        handler: Callable[[LlmRequest], list[str]] | None = None,
        default: str = "",
    ):
        self.script = dict(script or {})
        self.handler = handler
        self.default = default
        self.calls: list[LlmRequest] = []

    def send(self, request: LlmRequest) -> LlmResponse:
        self.calls.append(request)
        completions = self.script.get(request.prompt)
        if completions is None:
            digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()
            completions = self.script.get(digest)
        if completions is None and self.handler is not None:
            completions = self.handler(request)
        if completions is None:
            completions = [self.default]
        completions = list(completions)
        while len(completions) < request.n_completions:
            completions.append(completions[-1])
        return LlmResponse(
            completions=completions[: request.n_completions],
            usage={"mock": True},
        )


def make_clean_completion(labels: Sequence[ActionLabel], taxonomy: Taxonomy) -> str:
    """A well-formed completion text for a label sequence."""
    return render_sequence(labels, taxonomy)


def _split_items(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _oov_word(word: str, taxonomy: Taxonomy) -> str:
    # Close to `word` (distance <= 2) but not an exact display form, so the
    # parser must flag it yet can still map it back.
    candidates = [word[:-1] + "q" if len(word) > 1 else word + "q", word + "q", "q" + word]
    for cand in candidates:
        if taxonomy.display_verb_id(cand) is None and taxonomy.display_noun_id(cand) is None:
            return cand
    return word + "qq"


def _plant(category: str, text: str, taxonomy: Taxonomy) -> str:
    items = _split_items(text)
    if category == SHORT_SEQ:
        items = items[:-2] if len(items) > 2 else items[:1]
    elif category == LONG_SEQ:
        items = items + [items[-1], items[-1]]
    elif category == INVALID_SEQ:
        items[len(items) // 2] = "unparseablejunk"
    elif category == INVALID_VERB:
        verb, noun = items[0].split()
        items[0] = f"{_oov_word(verb, taxonomy)} {noun}"
    elif category == INVALID_NOUN:
        verb, noun = items[-1].split()
        items[-1] = f"{verb} {_oov_word(noun, taxonomy)}"
    else:
        raise ConfigError(f"unknown incident category {category!r}")
    return ", ".join(items)


def plant_incidents(
    completions: Sequence[str],
    rates: dict[str, float],
    taxonomy: Taxonomy,
    seed: int = 0,
) -> tuple[list[str], dict[str, int]]:
    """Inject one incident into a fraction of clean completions per category.

    ``rates`` maps incident category names to fractions of the suite; counts
    are rounded to whole completions and assigned to disjoint, seeded-shuffled
    indices, so each affected completion exhibits exactly one category. The
    planted counts are returned as the ground truth the parser must report.
    """
    n = len(completions)
    counts = {category: int(round(rate * n)) for category, rate in rates.items()}
    if sum(counts.values()) > n:
        raise ConfigError("incident rates sum to more than the suite size")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    faulted = list(completions)
    cursor = 0
    for category in sorted(counts):
        for _ in range(counts[category]):
            idx = order[cursor]
            cursor += 1
            faulted[idx] = _plant(category, faulted[idx], taxonomy)
    return faulted, counts
