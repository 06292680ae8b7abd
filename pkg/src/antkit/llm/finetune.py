"""Fine-tuning sample export: prompt/completion JSONL files.

Prompts are the comma-joined observed actions ending in ``" =>"``; completions
are the future actions with a leading space. Top-down samples prepend
``Goal:<goal> Observed actions:`` to the prompt.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from ..dataset import LtaInstance
from ..errors import ConfigError
from ..taxonomy import LabelRendering, Taxonomy, render_sequence
from .prompts import goal_query

GT_ONLY = "gt_only"
RECOG_ONLY = "recog_only"
BOTH = "both"


def _sample(
    instance: LtaInstance,
    taxonomy: Taxonomy,
    with_goal: bool,
    source: str,
    rendering: LabelRendering | None,
) -> dict:
    observed_text = render_sequence(instance.observed, taxonomy, rendering)
    future_text = render_sequence(instance.future_gt, taxonomy, rendering)
    if with_goal:
        prompt = f"{goal_query(instance.goal or '', observed_text)} =>"
    else:
        prompt = f"{observed_text} =>"
    return {
        "prompt": prompt,
        "completion": f" {future_text}",
        "source": source,
        "instance_id": instance.instance_id,
    }


def build_finetune_samples(
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    with_goal: bool = False,
    mix: str = GT_ONLY,
    recognized: Sequence[LtaInstance] | None = None,
    rendering: LabelRendering | None = None,
) -> list[dict]:
    """Build fine-tuning samples from ground-truth and/or recognized inputs.

    ``mix`` selects the training-input paradigm: ground-truth observations
    only, recognized (noisy) observations only, or both, which emits two
    samples per instance with the recognized ones flagged in metadata. The
    ``recognized`` list must parallel ``instances`` when used.
    """
    if mix not in (GT_ONLY, RECOG_ONLY, BOTH):
        raise ConfigError(f"unknown teacher-forcing mix {mix!r}")
    if mix != GT_ONLY:
        if recognized is None or len(recognized) != len(instances):
            raise ConfigError("mix requires a recognized instance per ground-truth instance")
    samples = []
    for idx, instance in enumerate(instances):
        if mix in (GT_ONLY, BOTH):
            samples.append(_sample(instance, taxonomy, with_goal, "gt", rendering))
        if mix in (RECOG_ONLY, BOTH):
            samples.append(_sample(recognized[idx], taxonomy, with_goal, "recognized", rendering))
    return samples


def write_finetune_samples(samples: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample, sort_keys=True) + "\n")
