"""Segment-annotation ingestion and anticipation-instance construction.

Two instance families are produced: ordered-prediction instances (observe the
last N_seg segments before a stop index, predict the next Z actions) and
set-prediction instances (observe the first K% of a video by time, predict the
set of classes occurring in the remainder).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError
from .taxonomy import ActionLabel, Taxonomy

GROUND_TRUTH = "ground_truth"

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    action: ActionLabel

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


@dataclass(frozen=True)
class VideoAnnotation:
    """One annotated video: ordered action segments plus optional metadata."""

    video_id: str
    split: str
    segments: tuple[Segment, ...]
    goal: str | None = None
    stop_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.segments:
            raise ParseError(f"video {self.video_id!r} has no segments")
        starts = [seg.start_s for seg in self.segments]
        if starts != sorted(starts):
            object.__setattr__(
                self, "segments", tuple(sorted(self.segments, key=lambda s: s.start_s))
            )

    @property
    def actions(self) -> tuple[ActionLabel, ...]:
        return tuple(seg.action for seg in self.segments)


@dataclass(frozen=True)
class ObservedSource:
    """Where the observed labels came from: ground truth or a noisy simulator."""

    kind: str = GROUND_TRUTH
    noise_rate: float = 0.0
    seed: int | None = None

    @staticmethod
    def recognized(noise_rate: float, seed: int) -> "ObservedSource":
        return ObservedSource("recognized", noise_rate, seed)


@dataclass(frozen=True)
class LtaInstance:
    """One ordered anticipation query at a stop index."""

    video_id: str
    stop_index: int
    observed: tuple[ActionLabel, ...]
    future_gt: tuple[ActionLabel, ...]
    observed_source: ObservedSource = ObservedSource()
    goal: str | None = None

    @property
    def instance_id(self) -> str:
        return f"{self.video_id}:{self.stop_index}"


@dataclass(frozen=True)
class SetInstance:
    """One set-prediction query at a percentage horizon."""

    video_id: str
    horizon_k: int
    observed: tuple[ActionLabel, ...]
    target_set: frozenset[int]

    @property
    def instance_id(self) -> str:
        return f"{self.video_id}@{self.horizon_k}"


def _parse_segment(data: dict, taxonomy: Taxonomy, line: int) -> Segment:
    try:
        start_s = float(data["start_s"])
        end_s = float(data["end_s"])
        verb = data["verb"]
        noun = data["noun"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad segment {data!r}: {exc}", line) from None
    if end_s <= start_s:
        raise ParseError(f"segment end {end_s} <= start {start_s}", line)
    action = ActionLabel(taxonomy.verb_id_of(verb), taxonomy.noun_id_of(noun))
    return Segment(start_s, end_s, action)


def parse_annotation(data: dict, taxonomy: Taxonomy, line: int | None = None) -> VideoAnnotation:
    if not isinstance(data, dict):
        raise ParseError("annotation is not a JSON object", line)
    try:
        video_id = str(data["video_id"])
        split = str(data["split"])
        raw_segments = data["segments"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc}", line) from None
    if split not in SPLITS:
        raise ParseError(f"unknown split {split!r}", line)
    if not isinstance(raw_segments, list) or not raw_segments:
        raise ParseError("segments must be a non-empty list", line)
    segments = tuple(_parse_segment(seg, taxonomy, line) for seg in raw_segments)
    stop_indices = data.get("stop_indices")
    if stop_indices is not None:
        stop_indices = tuple(int(t) for t in stop_indices)
        bad = [t for t in stop_indices if not 0 <= t < len(segments)]
        if bad:
            raise ParseError(f"stop indices {bad} out of range", line)
    return VideoAnnotation(
        video_id=video_id,
        split=split,
        segments=segments,
        goal=data.get("goal"),
        stop_indices=stop_indices,
    )


def ingest_annotations(path: str | Path, taxonomy: Taxonomy) -> list[VideoAnnotation]:
    """Read a JSONL annotation file, one video per line, validated."""
    videos = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line_no) from None
            videos.append(parse_annotation(data, taxonomy, line_no))
    return videos


def annotation_to_dict(video: VideoAnnotation, taxonomy: Taxonomy) -> dict:
    data: dict = {
        "video_id": video.video_id,
        "split": video.split,
        "segments": [
            {
                "start_s": seg.start_s,
                "end_s": seg.end_s,
                "verb": taxonomy.verbs[seg.action.verb_id],
                "noun": taxonomy.nouns[seg.action.noun_id],
            }
            for seg in video.segments
        ],
    }
    if video.goal is not None:
        data["goal"] = video.goal
    if video.stop_indices is not None:
        data["stop_indices"] = list(video.stop_indices)
    return data


def write_annotations(
    videos: Iterable[VideoAnnotation], taxonomy: Taxonomy, path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for video in videos:
            handle.write(json.dumps(annotation_to_dict(video, taxonomy), sort_keys=True))
            handle.write("\n")


def instance_to_dict(instance: LtaInstance, taxonomy: Taxonomy) -> dict:
    def words(labels: Sequence[ActionLabel]) -> list[list[str]]:
        return [
            [taxonomy.verbs[lab.verb_id], taxonomy.nouns[lab.noun_id]] for lab in labels
        ]

    data: dict = {
        "video_id": instance.video_id,
        "stop_index": instance.stop_index,
        "observed": words(instance.observed),
        "future": words(instance.future_gt),
        "observed_source": {
            "kind": instance.observed_source.kind,
            "noise_rate": instance.observed_source.noise_rate,
            "seed": instance.observed_source.seed,
        },
    }
    if instance.goal is not None:
        data["goal"] = instance.goal
    return data


def write_instances(
    instances: Iterable[LtaInstance], taxonomy: Taxonomy, path: str | Path
) -> None:
    """Dump instances as JSONL mirroring the annotation schema plus
    observed/future action arrays."""
    with open(path, "w", encoding="utf-8") as handle:
        for instance in instances:
            handle.write(json.dumps(instance_to_dict(instance, taxonomy), sort_keys=True))
            handle.write("\n")


def read_instances(path: str | Path, taxonomy: Taxonomy) -> list[LtaInstance]:
    def parse_labels(rows: list, line: int) -> tuple[ActionLabel, ...]:
        try:
            return tuple(
                ActionLabel(taxonomy.verb_id_of(verb), taxonomy.noun_id_of(noun))
                for verb, noun in rows
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad action array: {exc}", line) from None

    instances = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line_no) from None
            source = data.get("observed_source", {})
            instances.append(
                LtaInstance(
                    video_id=str(data["video_id"]),
                    stop_index=int(data["stop_index"]),
                    observed=parse_labels(data["observed"], line_no),
                    future_gt=parse_labels(data["future"], line_no),
                    observed_source=ObservedSource(
                        kind=source.get("kind", GROUND_TRUTH),
                        noise_rate=float(source.get("noise_rate", 0.0)),
                        seed=source.get("seed"),
                    ),
                    goal=data.get("goal"),
                )
            )
    return instances


def make_lta_instances(video: VideoAnnotation, n_seg: int, z: int) -> list[LtaInstance]:
    """Enumerate ordered-prediction instances for one video.

    Valid stop indices are T in [n_seg - 1, N - z - 1] (0-based), so the
    observed window and the future window both fit; a video-level
    ``stop_indices`` list overrides the enumeration. Videos too short for any
    window yield an empty list.
    """
    if n_seg < 1 or z < 1:
        raise ValueError("n_seg and z must be >= 1")
    actions = video.actions
    n = len(actions)
    if video.stop_indices is not None:
        stops = [t for t in video.stop_indices if n_seg - 1 <= t <= n - z - 1]
    else:
        stops = list(range(n_seg - 1, n - z))
    return [
        LtaInstance(
            video_id=video.video_id,
            stop_index=t,
            observed=actions[t - n_seg + 1 : t + 1],
            future_gt=actions[t + 1 : t + 1 + z],
            goal=video.goal,
        )
        for t in stops
    ]


def make_set_instances(
    video: VideoAnnotation,
    taxonomy: Taxonomy,
    horizons: Sequence[int] = (25, 50, 75),
    target_kind: str = "verb",
) -> list[SetInstance]:
    """Build set-prediction instances at percentage horizons.

    A segment belongs to the observed side when its midpoint is at or before
    the K% time boundary. Targets are verb ids by default
    (``target_kind="action"`` uses composite action ids). Horizons with an
    empty target set or nothing observed are dropped, so a single-segment
    video yields no instances.
    """
    if target_kind not in ("verb", "action"):
        raise ValueError(f"unknown target kind {target_kind!r}")
    start = video.segments[0].start_s
    end = video.segments[-1].end_s
    duration = end - start
    if duration <= 0:
        return []
    instances = []
    for k in horizons:
        boundary = start + duration * k / 100.0
        observed = [seg.action for seg in video.segments if seg.midpoint <= boundary]
        future = [seg.action for seg in video.segments if seg.midpoint > boundary]
        if target_kind == "verb":
            target = frozenset(lab.verb_id for lab in future)
        else:
            target = frozenset(taxonomy.action_id(lab) for lab in future)
        if not target or not observed:
            continue
        instances.append(
            SetInstance(
                video_id=video.video_id,
                horizon_k=int(k),
                observed=tuple(observed),
                target_set=target,
            )
        )
    return instances


def corrupt_observations(
    instance: LtaInstance, taxonomy: Taxonomy, noise_rate: float, seed: int
) -> LtaInstance:
    """Simulate recognition noise on the observed window.

    Each observed verb and noun field is independently resampled uniformly
    from the rest of its vocabulary with probability ``noise_rate``; fields
    are visited in segment order, verb before noun, from a single
    ``random.Random(seed)`` stream. A vocabulary of size 1 cannot be
    corrupted and is left unchanged.
    """
    if not 0.0 <= noise_rate <= 1.0:
        raise ValueError(f"noise rate {noise_rate} outside [0, 1]")
    rng = random.Random(seed)

    def resample(true_id: int, size: int) -> int:
        if rng.random() >= noise_rate or size < 2:
            return true_id
        draw = rng.randrange(size - 1)
        return draw + 1 if draw >= true_id else draw

    corrupted = tuple(
        ActionLabel(
            resample(label.verb_id, taxonomy.n_verbs),
            resample(label.noun_id, taxonomy.n_nouns),
        )
        for label in instance.observed
    )
    return replace(
        instance,
        observed=corrupted,
        observed_source=ObservedSource.recognized(noise_rate, seed),
    )
