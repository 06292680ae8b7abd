"""Edit-distance and mean-average-precision metrics.

The sequence metric is the normalized Damerau-Levenshtein distance of the
best of K candidate sequences against ground truth, averaged over instances
and reported separately for the verb, noun, and joint action channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import MissingPrediction, ShapeError
from .taxonomy import ActionLabel, Taxonomy

VERB = "verb"
NOUN = "noun"
ACTION = "action"
CHANNELS = (VERB, NOUN, ACTION)

OSA = "osa"
FULL_DL = "dl"


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Plain insert/delete/substitute edit distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def _osa(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    # Optimal string alignment: adjacent transposition costs 1 but the
    # transposed pair cannot be edited again.
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev2 = [0] * (m + 1)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                cost = min(cost, prev2[j - 2] + 1)
            cur[j] = cost
        prev2, prev = prev, cur
    return prev[-1]


def _full_dl(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    # Lowrance-Wagner distance with unrestricted transpositions.
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    maxdist = n + m
    last_row: dict[Hashable, int] = {}
    d = [[maxdist] * (m + 2) for _ in range(n + 2)]
    for i in range(n + 1):
        d[i + 1][1] = i
    for j in range(m + 1):
        d[1][j + 1] = j
    for i in range(1, n + 1):
        last_col = 0
        for j in range(1, m + 1):
            row = last_row.get(b[j - 1], 0)
            col = last_col
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_col = j
            else:
                cost = 1
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[row][col] + (i - row - 1) + 1 + (j - col - 1),
            )
        last_row[a[i - 1]] = i
    return d[n + 1][m + 1]


def damerau_levenshtein(
    a: Sequence[Hashable], b: Sequence[Hashable], variant: str = OSA
) -> int:
    """Damerau-Levenshtein distance between two token sequences.

    The default is the optimal-string-alignment variant (insert, delete,
    substitute, adjacent transpose; no re-editing of a transposed pair),
    matching common benchmark tooling. ``variant="dl"`` selects the
    unrestricted distance, which can be smaller.
    """
    if variant == OSA:
        return _osa(a, b)
    if variant == FULL_DL:
        return _full_dl(a, b)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class CandidateSet:
    """K predicted sequences of equal length, the unit scored by ed_at_z."""

    sequences: tuple[tuple[ActionLabel, ...], ...]

    def __post_init__(self):
        if len(self.sequences) < 1:
            raise ShapeError("candidate set needs at least one sequence")
        z = len(self.sequences[0])
        if any(len(seq) != z for seq in self.sequences):
            raise ShapeError("candidate sequences have unequal lengths")

    @staticmethod
    def from_lists(sequences: Iterable[Iterable[ActionLabel]]) -> "CandidateSet":
        return CandidateSet(tuple(tuple(seq) for seq in sequences))

    @property
    def k(self) -> int:
        return len(self.sequences)

    @property
    def z(self) -> int:
        return len(self.sequences[0])

    def appended(self, sequence: Iterable[ActionLabel]) -> "CandidateSet":
        return CandidateSet(self.sequences + (tuple(sequence),))


def project(sequence: Sequence[ActionLabel], channel: str) -> tuple:
    """Project labels onto a comparison channel: verb ids, noun ids, or pairs."""
    if channel == VERB:
        return tuple(lab.verb_id for lab in sequence)
    if channel == NOUN:
        return tuple(lab.noun_id for lab in sequence)
    if channel == ACTION:
        return tuple(lab.as_tuple() for lab in sequence)
    raise ValueError(f"unknown channel {channel!r}")


def ed_at_z(
    candidates: CandidateSet,
    gt: Sequence[ActionLabel],
    channel: str,
    variant: str = OSA,
    normalize: str = "z",
) -> float:
    """Min over candidates of the normalized edit distance on one channel.

    The denominator is the target length Z by default; ``normalize="maxlen"``
    divides by max(|candidate|, |gt|) instead (identical when lengths agree,
    which the shape check enforces).
    """
    z = len(gt)
    if z == 0:
        raise ShapeError("empty ground-truth sequence")
    if candidates.z != z:
        raise ShapeError(f"candidate length {candidates.z} != ground-truth length {z}")
    gt_proj = project(gt, channel)
    best = min(
        damerau_levenshtein(project(seq, channel), gt_proj, variant=variant)
        for seq in candidates.sequences
    )
    denom = z if normalize == "z" else max(candidates.z, z)
    return best / denom


@dataclass(frozen=True)
class EdReport:
    """Mean-over-instances of min-over-candidates normalized edit distance."""

    verb_ed: float
    noun_ed: float
    action_ed: float
    n_instances: int = 0

    def __post_init__(self):
        for value in (self.verb_ed, self.noun_ed, self.action_ed):
            if not 0.0 <= value <= 1.0:
                raise ShapeError(f"edit distance {value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "verb_ed": self.verb_ed,
            "noun_ed": self.noun_ed,
            "action_ed": self.action_ed,
            "n_instances": self.n_instances,
        }


def evaluate_lta(
    predictions: Mapping[str, CandidateSet],
    gts: Mapping[str, Sequence[ActionLabel]],
    variant: str = OSA,
    normalize: str = "z",
) -> EdReport:
    """Score a prediction dump against ground truth, per channel.

    Every ground-truth instance must have a prediction; extra predictions are
    ignored.
    """
    if not gts:
        raise ShapeError("no ground-truth instances to evaluate")
    sums = {channel: 0.0 for channel in CHANNELS}
    for instance_id in gts:
        if instance_id not in predictions:
            raise MissingPrediction(str(instance_id))
        candidates = predictions[instance_id]
        for channel in CHANNELS:
            sums[channel] += ed_at_z(
                candidates, gts[instance_id], channel, variant=variant, normalize=normalize
            )
    n = len(gts)
    return EdReport(
        verb_ed=sums[VERB] / n,
        noun_ed=sums[NOUN] / n,
        action_ed=sums[ACTION] / n,
        n_instances=n,
    )


def average_precision(ranked: Sequence[tuple[float, bool]]) -> float | None:
    """All-points AP: precision at each positive's rank, averaged.

    ``ranked`` holds (score, is_target) pairs in arbitrary order; they are
    sorted by score descending with stable order among ties. Returns None when
    the class has no positives.
    """
    order = sorted(range(len(ranked)), key=lambda i: -ranked[i][0])
    hits = 0
    precision_sum = 0.0
    for rank, idx in enumerate(order, start=1):
        if ranked[idx][1]:
            hits += 1
            precision_sum += hits / rank
    if hits == 0:
        return None
    return precision_sum / hits


@dataclass(frozen=True)
class MapReport:
    """Mean average precision over all evaluated classes and Freq/Rare splits."""

    all_map: float
    freq_map: float | None
    rare_map: float | None
    freq_set: tuple[int, ...] = ()
    rare_set: tuple[int, ...] = ()
    excluded: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "all_map": self.all_map,
            "freq_map": self.freq_map,
            "rare_map": self.rare_map,
            "freq_set": list(self.freq_set),
            "rare_set": list(self.rare_set),
            "excluded": list(self.excluded),
        }


def mean_ap(
    scores: Mapping[int, Sequence[tuple[float, bool]]],
    freq_threshold: int,
    train_counts: Mapping[int, int] | None = None,
) -> MapReport:
    """Multi-label mAP with Freq/Rare partitions, reported as percentages.

    ``scores`` maps each class to its (score, is_target) pairs over instances.
    Classes with zero positives are excluded from the means and listed in the
    report. The Freq set holds classes whose training-set occurrence count
    (``train_counts``, default 0) reaches ``freq_threshold``.
    """
    train_counts = train_counts or {}
    aps: dict[int, float] = {}
    excluded = []
    for cls in sorted(scores):
        ap = average_precision(scores[cls])
        if ap is None:
            excluded.append(cls)
        else:
            aps[cls] = ap
    if not aps:
        raise ShapeError("no class has a positive instance")
    freq_set = tuple(c for c in aps if train_counts.get(c, 0) >= freq_threshold)
    rare_set = tuple(c for c in aps if c not in set(freq_set))

    def mean_pct(classes: Sequence[int]) -> float | None:
        if not classes:
            return None
        return 100.0 * sum(aps[c] for c in classes) / len(classes)

    return MapReport(
        all_map=mean_pct(sorted(aps)),
        freq_map=mean_pct(freq_set),
        rare_map=mean_pct(rare_set),
        freq_set=freq_set,
        rare_set=rare_set,
        excluded=tuple(excluded),
    )


def validate_candidates(candidates: CandidateSet, taxonomy: Taxonomy) -> None:
    """Raise InvalidLabel if any candidate label is outside the taxonomy."""
    for seq in candidates.sequences:
        for label in seq:
            taxonomy.check_label(label)
