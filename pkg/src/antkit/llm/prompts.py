"""Prompt bundles for goal inference, few-shot anticipation, chain-of-thought,
and counterfactual probes.

All builders are pure: the same inputs produce byte-identical text, which the
golden snapshot tests enforce. In-context examples render as
``"<input> => <output>"`` lines and the final query line carries a trailing
``" => "`` marker with no output.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from importlib import resources
from typing import Sequence, TypeVar

from ..errors import DegenerateCounterfactual, NeedExamples
from ..taxonomy import ActionLabel, LabelRendering, Taxonomy, render_sequence

GOAL_ICL = "goal_icl"
BOTTOM_UP_ICL = "bottom_up_icl"
COT = "cot"
FINE_TUNE_SAMPLE = "fine_tune_sample"
COUNTERFACTUAL = "counterfactual"

T = TypeVar("T")


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered request: instruction, examples, and an open query."""

    kind: str
    instruction: str
    examples: tuple[tuple[str, str], ...]
    query: str

    def render(self) -> str:
        segments = []
        if self.instruction:
            segments.append(self.instruction)
            segments.append("")
        segments.extend(f"{inp} => {out}" for inp, out in self.examples)
        segments.append(f"{self.query} => ")
        return "\n".join(segments)


def goal_query(goal: str, observed_text: str) -> str:
    """Goal-conditioned query prefix: ``Goal:<goal> Observed actions:<observed>``."""
    return f"Goal:{goal} Observed actions:{observed_text}"


def sample_examples(pool: Sequence[T], n: int, seed: int) -> list[T]:
    """Seeded sample without replacement; returns the whole pool when small."""
    if n >= len(pool):
        return list(pool)
    return random.Random(seed).sample(list(pool), n)


def build_goal_prompt(
    examples: Sequence[tuple[Sequence[ActionLabel], str]],
    query_observed: Sequence[ActionLabel],
    taxonomy: Taxonomy,
    rendering: LabelRendering | None = None,
) -> PromptBundle:
    """Few-shot goal inference: examples map observed actions to a goal text."""
    if not examples:
        raise NeedExamples("goal inference needs at least one example")
    return PromptBundle(
        kind=GOAL_ICL,
        instruction="",
        examples=tuple(
            (render_sequence(observed, taxonomy, rendering), goal)
            for observed, goal in examples
        ),
        query=render_sequence(query_observed, taxonomy, rendering),
    )


def build_icl_prompt(
    instruction: str,
    examples: Sequence[tuple[Sequence[ActionLabel], Sequence[ActionLabel]]],
    query_observed: Sequence[ActionLabel],
    taxonomy: Taxonomy,
    rendering: LabelRendering | None = None,
) -> PromptBundle:
    """Few-shot bottom-up anticipation: examples map observed to future actions.

    An empty example list yields a valid zero-shot bundle.
    """
    return PromptBundle(
        kind=BOTTOM_UP_ICL,
        instruction=instruction,
        examples=tuple(
            (
                render_sequence(observed, taxonomy, rendering),
                render_sequence(future, taxonomy, rendering),
            )
            for observed, future in examples
        ),
        query=render_sequence(query_observed, taxonomy, rendering),
    )


def build_cot_prompt(
    instruction: str,
    examples: Sequence[tuple[Sequence[ActionLabel], str, Sequence[ActionLabel]]],
    query_observed: Sequence[ActionLabel],
    taxonomy: Taxonomy,
    rendering: LabelRendering | None = None,
) -> PromptBundle:
    """Chain-of-thought: example outputs state the goal, then the actions."""
    return PromptBundle(
        kind=COT,
        instruction=instruction,
        examples=tuple(
            (
                render_sequence(observed, taxonomy, rendering),
                f"Goal: {goal}. Actions: {render_sequence(future, taxonomy, rendering)}",
            )
            for observed, goal, future in examples
        ),
        query=render_sequence(query_observed, taxonomy, rendering),
    )


_GOAL_MARK = re.compile(r"Goal\s*:\s*")
_ACTIONS_MARK = re.compile(r"Actions\s*:\s*")


def parse_cot_completion(text: str) -> tuple[str, str, bool]:
    """Split a chain-of-thought completion into (goal, actions text, goal_found).

    A missing ``Goal:`` marker yields an empty goal but still parses the
    actions; a missing ``Actions:`` marker treats the remainder (or, with no
    markers at all, the whole text) as the action sequence.
    """
    goal_match = _GOAL_MARK.search(text)
    actions_match = _ACTIONS_MARK.search(text)
    goal = ""
    if goal_match:
        end = actions_match.start() if actions_match else len(text)
        goal = text[goal_match.end() : end].strip().rstrip(".").strip()
    if actions_match:
        actions_text = text[actions_match.end() :].strip()
    elif goal_match:
        actions_text = ""
    else:
        actions_text = text.strip()
    return goal, actions_text, goal_match is not None


def counterfactual_pair(
    observed: Sequence[ActionLabel],
    inferred_goal: str,
    altered_goal: str,
    examples: Sequence[tuple[str, Sequence[ActionLabel], Sequence[ActionLabel]]],
    taxonomy: Taxonomy,
    rendering: LabelRendering | None = None,
) -> tuple[PromptBundle, PromptBundle]:
    """Two goal-conditioned bundles identical except the goal in the query.

    Examples are (goal, observed, future) triples rendered as
    ``Goal:<goal> Observed actions:<observed> => <future>`` lines.
    """
    if inferred_goal == altered_goal:
        raise DegenerateCounterfactual(f"goals are identical: {inferred_goal!r}")
    rendered_examples = tuple(
        (
            goal_query(goal, render_sequence(obs, taxonomy, rendering)),
            render_sequence(future, taxonomy, rendering),
        )
        for goal, obs, future in examples
    )
    observed_text = render_sequence(observed, taxonomy, rendering)

    def bundle(goal: str) -> PromptBundle:
        return PromptBundle(
            kind=COUNTERFACTUAL,
            instruction="",
            examples=rendered_examples,
            query=goal_query(goal, observed_text),
        )

    return bundle(inferred_goal), bundle(altered_goal)


def _vocabulary_text(words: Sequence[str], inline: bool, kind: str) -> str:
    if inline:
        return ", ".join(words)
    return f"({len(words)} {kind} words, not listed)"


def default_instruction(
    kind: str,
    taxonomy: Taxonomy,
    z: int,
    inline_vocab: bool = True,
) -> str:
    """Fill the shipped instruction template for a prompt kind.

    The wording is a project default, deliberately editable; treat it as a
    starting point rather than a fixed contract.
    """
    name = {BOTTOM_UP_ICL: "icl_instruction.txt", COT: "cot_instruction.txt"}[kind]
    template = resources.files("antkit.llm").joinpath("templates", name).read_text()
    return template.strip().format(
        z=z,
        verb_vocabulary=_vocabulary_text(taxonomy.display_verb, inline_vocab, "verb"),
        noun_vocabulary=_vocabulary_text(taxonomy.display_noun, inline_vocab, "noun"),
    )
