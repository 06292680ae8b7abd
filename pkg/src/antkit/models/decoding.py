"""Candidate-sequence decoding strategies shared by all local models.

Every model exposes ``begin(observed, goal_id)`` and
``step(ctx, chosen, position)`` returning a joint next-action distribution
over composite action ids; greedy, nucleus-sampling, and beam decoding are
implemented once on top of that interface. Argmax ties break toward the
lowest action id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..errors import ConfigMismatch
from ..metrics import CandidateSet
from ..taxonomy import ActionLabel, Taxonomy


class StepModel(Protocol):
    goal_conditioned: bool

    def begin(self, observed: tuple[int, ...], goal_id: int | None = None): ...

    def step(self, ctx, chosen: tuple[int, ...], position: int) -> np.ndarray: ...


@dataclass(frozen=True)
class Greedy:
    """Argmax decoding; candidates beyond the first fan out on the first step."""


@dataclass(frozen=True)
class TopP:
    """Seeded nucleus sampling with a temperature."""

    p: float
    temperature: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Beam:
    """Beam search over action steps."""

    width: int


Strategy = Greedy | TopP | Beam


def _check_taxonomy(model, taxonomy: Taxonomy) -> None:
    fingerprint = getattr(model, "taxonomy_fingerprint", None)
    if fingerprint is None:
        fingerprint = model.bindings.taxonomy_fingerprint
    if fingerprint and fingerprint != taxonomy.fingerprint():
        raise ConfigMismatch("model was trained on a different taxonomy")


def _greedy_rollout(model, ctx, z: int, first: int | None = None) -> list[int]:
    chosen: list[int] = [] if first is None else [first]
    while len(chosen) < z:
        dist = model.step(ctx, tuple(chosen), len(chosen))
        chosen.append(int(np.argmax(dist)))
    return chosen


def _decode_greedy(model, ctx, z: int, k: int) -> list[list[int]]:
    first_dist = model.step(ctx, (), 0)
    ranked = np.argsort(-first_dist, kind="stable")
    sequences = [
        _greedy_rollout(model, ctx, z, first=int(ranked[i]))
        for i in range(min(k, len(ranked)))
    ]
    while len(sequences) < k:
        sequences.append(list(sequences[0]))
    return sequences


def _decode_beam(model, ctx, z: int, k: int, width: int) -> list[list[int]]:
    if width < 1:
        raise ConfigMismatch("beam width must be >= 1")
    beams: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    for position in range(z):
        expansions = []
        for actions, score in beams:
            dist = model.step(ctx, actions, position)
            for action in np.argsort(-dist, kind="stable")[:width]:
                logp = math.log(max(float(dist[action]), 1e-300))
                expansions.append((actions + (int(action),), score + logp))
        expansions.sort(key=lambda item: (-item[1], item[0]))
        beams = expansions[:width]
    return [list(actions) for actions, _ in beams[:k]]


def _temper(dist: np.ndarray, temperature: float) -> np.ndarray:
    if temperature == 1.0:
        return dist / dist.sum()
    logits = np.log(np.maximum(dist, 1e-300)) / temperature
    logits -= logits.max()
    exp = np.exp(logits)
    return exp / exp.sum()


def _nucleus_sample(probs: np.ndarray, p: float, rng: np.random.Generator) -> int:
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, min(p, 1.0)))
    keep = order[: cut + 1]
    kept = probs[keep] / probs[keep].sum()
    return int(rng.choice(keep, p=kept))


def _decode_topp(model, ctx, z: int, k: int, strategy: TopP) -> list[list[int]]:
    if not 0.0 < strategy.p <= 1.0:
        raise ConfigMismatch("top-p must be in (0, 1]")
    if strategy.temperature <= 0.0:
        raise ConfigMismatch("temperature must be > 0")
    rng = np.random.default_rng(strategy.seed)
    sequences = []
    for _ in range(k):
        chosen: list[int] = []
        for position in range(z):
            dist = model.step(ctx, tuple(chosen), position)
            probs = _temper(dist, strategy.temperature)
            chosen.append(_nucleus_sample(probs, strategy.p, rng))
        sequences.append(chosen)
    return sequences


def _decode(
    model,
    taxonomy: Taxonomy,
    observed: Sequence[ActionLabel],
    z: int,
    k: int,
    strategy: Strategy,
    goal_id: int | None,
) -> CandidateSet:
    if k < 1 or z < 1:
        raise ConfigMismatch("K and Z must be >= 1")
    _check_taxonomy(model, taxonomy)
    for label in observed:
        taxonomy.check_label(label)
    observed_ids = tuple(taxonomy.action_id(label) for label in observed)
    ctx = model.begin(observed_ids, goal_id)
    if isinstance(strategy, Greedy):
        raw = _decode_greedy(model, ctx, z, k)
    elif isinstance(strategy, Beam):
        raw = _decode_beam(model, ctx, z, k, strategy.width)
    elif isinstance(strategy, TopP):
        raw = _decode_topp(model, ctx, z, k, strategy)
    else:
        raise ConfigMismatch(f"unknown strategy {strategy!r}")
    return CandidateSet.from_lists(
        [taxonomy.label_of(action) for action in sequence] for sequence in raw
    )


def predict(
    model,
    observed: Sequence[ActionLabel],
    z: int,
    k: int,
    strategy: Strategy,
    taxonomy: Taxonomy,
) -> CandidateSet:
    """Decode K future sequences of length Z from the observed actions.

    Goal-conditioned models run with the learned null-goal token; use
    :func:`predict_topdown` to supply a goal.
    """
    goal_id = 0 if getattr(model, "goal_conditioned", False) else None
    return _decode(model, taxonomy, observed, z, k, strategy, goal_id)


def predict_topdown(
    model,
    observed: Sequence[ActionLabel],
    goal: str | None,
    z: int,
    k: int,
    strategy: Strategy,
    taxonomy: Taxonomy,
) -> CandidateSet:
    """Goal-conditioned decoding; the goal text is resolved against the
    model's training-time goal vocabulary (empty and unknown goals map to the
    null-goal token)."""
    if not getattr(model, "goal_conditioned", False):
        raise ConfigMismatch("model was not trained with goal conditioning")
    goal_id = model.bindings.goal_id(goal)
    return _decode(model, taxonomy, observed, z, k, strategy, goal_id)
