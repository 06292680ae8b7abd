"""Synthetic activity grammars for verification experiments.

Videos are sampled from small first-order grammars over a toy vocabulary:
a deterministic cycle (every model should solve it exactly), a
goal-determined grammar whose futures diverge per goal after a shared prefix
(so goal conditioning is the only way to win), and a stochastic branching
chain (so soft teacher distributions carry more than the sampled data).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..dataset import Segment, VideoAnnotation
from ..errors import ConfigError
from ..taxonomy import Taxonomy, build_taxonomy

START_STATE = -1

DEFAULT_VERBS = (
    "open", "close", "take", "put", "mix", "pour", "cut", "wash", "move", "turn",
    "lift", "press", "shake", "peel", "fold", "wipe", "stir", "drop", "pull", "push",
)
DEFAULT_NOUNS = (
    "door", "window", "cup", "plate", "bowl", "knife", "pan", "towel", "box", "jar",
    "lid", "spoon", "bottle", "bag", "cloth", "board", "brush", "tray", "rack", "pot",
)
GOAL_NAMES = (
    "prepare a meal", "clean the kitchen", "fix the shelf", "pack for a trip",
    "sort the pantry", "repot the plants",
)

State = tuple[int, ...]
Rules = Mapping[State, Sequence[tuple[int, float]]]


@dataclass(frozen=True)
class SyntheticGrammar:
    """Production rules over composite action ids, per goal.

    Rule keys are tuples of trailing actions; lookup tries the longest known
    suffix of the history, so first-order grammars key on single actions and
    the empty tuple drives the start distribution.
    """

    name: str
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    goals: tuple[str, ...]
    rules: dict[str, Rules]
    order: int = 1
    shared_cycle: tuple[int, ...] = ()
    shared_len: int = 0

    def __post_init__(self):
        if not self.goals:
            raise ConfigError("grammar needs at least one goal")
        if self.shared_len and not self.shared_cycle:
            raise ConfigError("shared_len set but no shared cycle given")
        for goal in self.goals:
            if goal not in self.rules:
                raise ConfigError(f"missing rules for goal {goal!r}")
            if () not in self.rules[goal]:
                raise ConfigError(f"rules for goal {goal!r} lack a start distribution")
            for state, successors in self.rules[goal].items():
                total = sum(p for _, p in successors)
                if not successors or abs(total - 1.0) > 1e-9:
                    raise ConfigError(f"rules for state {state} do not sum to 1")

    def taxonomy(self) -> Taxonomy:
        return build_taxonomy(list(self.verbs), list(self.nouns))

    def successors(self, goal: str, history: Sequence[int]) -> Sequence[tuple[int, float]]:
        rules = self.rules[goal]
        state = tuple(history[max(0, len(history) - self.order) :])
        while state not in rules and state:
            state = state[1:]
        return rules[state]

    def allowed_transitions(self, goal: str) -> set[tuple[State, int]]:
        allowed = set()
        for state, successors in self.rules[goal].items():
            for action, prob in successors:
                if prob > 0:
                    allowed.add((state, action))
        return allowed

    def sample_actions(self, goal: str, length: int, rng: random.Random) -> list[int]:
        actions: list[int] = []
        if self.shared_len:
            phase = rng.randrange(len(self.shared_cycle))
            cycle = self.shared_cycle
            actions.extend(cycle[(phase + i) % len(cycle)] for i in range(self.shared_len))
            history: list[int] = []
        else:
            history = []
        while len(actions) < length:
            successors = self.successors(goal, history)
            roll = rng.random()
            cumulative = 0.0
            action = successors[-1][0]
            for candidate, prob in successors:
                cumulative += prob
                if roll < cumulative:
                    action = candidate
                    break
            actions.append(action)
            history.append(action)
        return actions[:length]


def _diagonal_action(i: int, n_nouns: int) -> int:
    return i * n_nouns + i


def make_cycle_grammar(
    n_actions: int = 6,
    verbs: Sequence[str] = DEFAULT_VERBS,
    nouns: Sequence[str] = DEFAULT_NOUNS,
) -> SyntheticGrammar:
    """Deterministic cycle over ``n_actions`` distinct actions, random phase."""
    if n_actions > min(len(verbs), len(nouns)):
        raise ConfigError("not enough vocabulary for the requested cycle")
    cycle = [_diagonal_action(i, len(nouns)) for i in range(n_actions)]
    rules: dict[State, list[tuple[int, float]]] = {
        (): [(a, 1.0 / n_actions) for a in cycle]
    }
    for i, action in enumerate(cycle):
        rules[(action,)] = [(cycle[(i + 1) % n_actions], 1.0)]
    goal = "follow the routine"
    return SyntheticGrammar(
        name="cycle",
        verbs=tuple(verbs),
        nouns=tuple(nouns),
        goals=(goal,),
        rules={goal: rules},
    )


def make_goal_grammar(
    n_goals: int = 2,
    shared_actions: int = 4,
    goal_actions: int = 6,
    shared_len: int = 16,
    verbs: Sequence[str] = DEFAULT_VERBS,
    nouns: Sequence[str] = DEFAULT_NOUNS,
) -> SyntheticGrammar:
    """Shared prefix cycle, then per-goal deterministic cycles over disjoint
    actions: identical observations, goal-determined futures."""
    needed = shared_actions + n_goals * goal_actions
    if needed > min(len(verbs), len(nouns)):
        raise ConfigError("not enough vocabulary for the requested goal grammar")
    if n_goals > len(GOAL_NAMES):
        raise ConfigError("not enough goal names")
    n_nouns = len(nouns)
    shared_cycle = tuple(_diagonal_action(i, n_nouns) for i in range(shared_actions))
    rules: dict[str, Rules] = {}
    goals = GOAL_NAMES[:n_goals]
    for g in range(n_goals):
        base = shared_actions + g * goal_actions
        cycle = [_diagonal_action(base + i, n_nouns) for i in range(goal_actions)]
        goal_rules: dict[State, list[tuple[int, float]]] = {(): [(cycle[0], 1.0)]}
        for i, action in enumerate(cycle):
            goal_rules[(action,)] = [(cycle[(i + 1) % goal_actions], 1.0)]
        rules[goals[g]] = goal_rules
    return SyntheticGrammar(
        name="goal",
        verbs=tuple(verbs),
        nouns=tuple(nouns),
        goals=goals,
        rules=rules,
        shared_cycle=shared_cycle,
        shared_len=shared_len,
    )


def make_branching_grammar(
    n_actions: int = 8,
    skew: float = 0.75,
    structure_seed: int = 0,
    verbs: Sequence[str] = DEFAULT_VERBS,
    nouns: Sequence[str] = DEFAULT_NOUNS,
) -> SyntheticGrammar:
    """Stochastic chain: from each action, a seeded pair of successors with
    probabilities (skew, 1 - skew)."""
    if n_actions > min(len(verbs), len(nouns)):
        raise ConfigError("not enough vocabulary for the requested chain")
    if not 0.5 <= skew < 1.0:
        raise ConfigError("skew must be in [0.5, 1)")
    rng = random.Random(structure_seed)
    actions = [_diagonal_action(i, len(nouns)) for i in range(n_actions)]
    rules: dict[State, list[tuple[int, float]]] = {
        (): [(a, 1.0 / n_actions) for a in actions]
    }
    for action in actions:
        major, minor = rng.sample(actions, 2)
        rules[(action,)] = [(major, skew), (minor, 1.0 - skew)]
    goal = "follow the routine"
    return SyntheticGrammar(
        name="branching",
        verbs=tuple(verbs),
        nouns=tuple(nouns),
        goals=(goal,),
        rules={goal: rules},
    )


def make_repeat_cycle_grammar(
    n_actions: int = 6,
    repeats: int = 2,
    verbs: Sequence[str] = DEFAULT_VERBS,
    nouns: Sequence[str] = DEFAULT_NOUNS,
) -> SyntheticGrammar:
    """Deterministic cycle with each action emitted ``repeats`` times in a row.

    The next action depends on whether the current run of repeats is
    complete, so one step of history is ambiguous and two are needed; this
    separates weak learners from strong ones on a noise-free task.
    """
    if repeats != 2:
        raise ConfigError("only repeats=2 is supported")
    if n_actions > min(len(verbs), len(nouns)):
        raise ConfigError("not enough vocabulary for the requested cycle")
    n_nouns = len(nouns)
    cycle = [_diagonal_action(i, n_nouns) for i in range(n_actions)]
    rules: dict[State, list[tuple[int, float]]] = {
        (): [(a, 1.0 / n_actions) for a in cycle]
    }
    for i, action in enumerate(cycle):
        nxt = cycle[(i + 1) % n_actions]
        prev = cycle[(i - 1) % n_actions]
        rules[(action,)] = [(action, 1.0)]
        rules[(action, action)] = [(nxt, 1.0)]
        rules[(prev, action)] = [(action, 1.0)]
    goal = "follow the routine"
    return SyntheticGrammar(
        name="repeat-cycle",
        verbs=tuple(verbs),
        nouns=tuple(nouns),
        goals=(goal,),
        rules={goal: rules},
        order=2,
    )


GRAMMAR_FACTORIES = {
    "cycle": make_cycle_grammar,
    "goal": make_goal_grammar,
    "branching": make_branching_grammar,
    "repeat-cycle": make_repeat_cycle_grammar,
}


def grammar_from_spec(spec: Mapping) -> SyntheticGrammar:
    spec = dict(spec)
    kind = spec.pop("kind", "cycle")
    generation_keys = {"n_videos", "length", "stop_at", "train", "val", "test", "seed"}
    params = {k: v for k, v in spec.items() if k not in generation_keys}
    try:
        factory = GRAMMAR_FACTORIES[kind]
    except KeyError:
        raise ConfigError(f"unknown grammar kind {kind!r}") from None
    return factory(**params)


def generate_synthetic(
    grammar: SyntheticGrammar,
    n_videos: int,
    length: int,
    seed: int,
    split: str = "train",
    stop_at: Sequence[int] | None = None,
) -> list[VideoAnnotation]:
    """Sample annotated videos from a grammar; goals rotate round-robin so
    splits stay balanced. ``stop_at`` pins explicit stop indices per video."""
    taxonomy = grammar.taxonomy()
    rng = random.Random(seed)
    videos = []
    for i in range(n_videos):
        goal = grammar.goals[i % len(grammar.goals)]
        actions = grammar.sample_actions(goal, length, rng)
        segments = tuple(
            Segment(float(j), float(j + 1), taxonomy.label_of(action))
            for j, action in enumerate(actions)
        )
        videos.append(
            VideoAnnotation(
                video_id=f"{grammar.name}-{split}-{i:04d}",
                split=split,
                segments=segments,
                goal=goal,
                stop_indices=tuple(stop_at) if stop_at is not None else None,
            )
        )
    return videos
