"""Additively smoothed n-gram model over composite action ids."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..dataset import LtaInstance
from ..errors import ConfigMismatch, EmptyCorpus
from ..taxonomy import Taxonomy


@dataclass
class NgramModel:
    """Counts over contexts of up to ``order - 1`` previous actions.

    Next-action probabilities are additively smoothed:
    ``P(a | ctx) = (count(ctx, a) + alpha) / (count(ctx) + alpha * V)``.
    Prediction uses the longest context suffix that was seen in training,
    backing off one action at a time; the empty context is always available
    once the model has seen any data.
    """

    order: int
    alpha: float
    n_actions: int
    taxonomy_fingerprint: str = ""
    counts: dict[tuple[int, ...], Counter] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.alpha <= 0:
            raise ValueError("smoothing alpha must be > 0")

    def observe_sequence(self, actions: Sequence[int]) -> None:
        for i, action in enumerate(actions):
            max_ctx = min(self.order - 1, i)
            for ctx_len in range(max_ctx + 1):
                ctx = tuple(actions[i - ctx_len : i])
                self.counts.setdefault(ctx, Counter())[action] += 1

    def next_distribution(self, history: Sequence[int]) -> np.ndarray:
        ctx = tuple(history[max(0, len(history) - (self.order - 1)) :])
        while ctx not in self.counts and ctx:
            ctx = ctx[1:]
        table = self.counts.get(ctx, Counter())
        probs = np.full(self.n_actions, self.alpha, dtype=np.float64)
        for action, count in table.items():
            probs[action] += count
        return probs / probs.sum()

    # decoding interface
    def begin(self, observed: tuple[int, ...], goal_id: int | None = None):
        if goal_id is not None:
            raise ConfigMismatch("n-gram models are not goal-conditioned")
        return observed

    def step(self, ctx: tuple[int, ...], chosen: tuple[int, ...], position: int) -> np.ndarray:
        return self.next_distribution(list(ctx) + list(chosen))

    @property
    def goal_conditioned(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "alpha": self.alpha,
            "n_actions": self.n_actions,
            "taxonomy_fingerprint": self.taxonomy_fingerprint,
            "counts": [
                [list(ctx), sorted(table.items())] for ctx, table in sorted(self.counts.items())
            ],
        }

    @staticmethod
    def from_dict(data: dict) -> "NgramModel":
        model = NgramModel(
            order=int(data["order"]),
            alpha=float(data["alpha"]),
            n_actions=int(data["n_actions"]),
            taxonomy_fingerprint=data.get("taxonomy_fingerprint", ""),
        )
        for ctx, items in data["counts"]:
            model.counts[tuple(ctx)] = Counter({int(a): int(c) for a, c in items})
        return model


def train_ngram(
    instances: Iterable[LtaInstance],
    taxonomy: Taxonomy,
    order: int,
    alpha: float = 0.1,
) -> NgramModel:
    """Accumulate counts over the (observed + future) action id sequences."""
    model = NgramModel(
        order=order,
        alpha=alpha,
        n_actions=taxonomy.n_actions,
        taxonomy_fingerprint=taxonomy.fingerprint(),
    )
    n_sequences = 0
    for instance in instances:
        actions = [taxonomy.action_id(lab) for lab in instance.observed + instance.future_gt]
        model.observe_sequence(actions)
        n_sequences += 1
    if n_sequences == 0:
        raise EmptyCorpus("no training instances")
    return model
