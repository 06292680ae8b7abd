"""Sequence-level knowledge distillation into compact students.

A frozen autoregressive teacher supplies per-token next-token distributions;
the student minimizes the language-modeling loss plus a weighted forward
KL(teacher || student) summed over the target token stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .dataset import LtaInstance
from .errors import ConfigMismatch
from .metrics import CHANNELS, EdReport, evaluate_lta
from .models.checkpoint import Checkpoint, load_model, parameter_hash
from .models.decoding import Greedy, predict
from .models.neural import (
    AUTOREGRESSIVE,
    ActionSequenceModel,
    SeqModelConfig,
    prepare_training_tensors,
    train_seq_model,
)
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class DistillConfig:
    teacher: Checkpoint
    student: SeqModelConfig
    kl_weight: float = 1.0
    kl_temperature: float = 1.0

    def __post_init__(self):
        if self.kl_weight < 0:
            raise ConfigMismatch("kl_weight must be >= 0")
        if self.kl_temperature <= 0:
            raise ConfigMismatch("kl_temperature must be > 0")
        if self.student.decode_mode != AUTOREGRESSIVE:
            raise ConfigMismatch("distillation students must be autoregressive")


def teacher_token_distributions(
    teacher: ActionSequenceModel,
    instance: LtaInstance,
    taxonomy: Taxonomy,
) -> np.ndarray:
    """Next-token distributions at every target position, teacher-forced.

    Rows are probability vectors over the action token vocabulary (verbs then
    nouns) for each of the 2Z future token slots.
    """
    if teacher.config.decode_mode != AUTOREGRESSIVE:
        raise ConfigMismatch("token distributions need an autoregressive model")
    if teacher.bindings.taxonomy_fingerprint != taxonomy.fingerprint():
        raise ConfigMismatch("teacher was trained on a different taxonomy")
    tensors = prepare_training_tensors(
        [instance], taxonomy, teacher.bindings, teacher.config.goal_conditioning
    )
    with torch.no_grad():
        log_probs = teacher.target_log_softmax(
            tensors.tokens, tensors.goal_ids, tensors.n_obs_tokens
        )
    return log_probs[0].exp().double().numpy()


def distill_train(
    config: DistillConfig,
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
) -> Checkpoint:
    """Train a student against a frozen teacher.

    With ``kl_weight == 0`` the run reduces exactly to plain training: the
    same loop, batch order, and update sequence. The teacher's parameters are
    hash-verified before and after training.
    """
    teacher = load_model(config.teacher)
    hash_before = parameter_hash(teacher)
    student = train_seq_model(
        instances,
        taxonomy,
        config.student,
        teacher=teacher,
        kl_weight=config.kl_weight,
        kl_temperature=config.kl_temperature,
    )
    if parameter_hash(teacher) != hash_before:
        raise ConfigMismatch("teacher parameters changed during distillation")
    return student


def _greedy_report(
    checkpoint: Checkpoint,
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    k: int = 1,
) -> EdReport:
    model = load_model(checkpoint)
    z = checkpoint.bindings.z
    predictions = {
        inst.instance_id: predict(model, inst.observed, z, k, Greedy(), taxonomy)
        for inst in instances
    }
    gts = {inst.instance_id: inst.future_gt for inst in instances}
    return evaluate_lta(predictions, gts)


def compare_students(
    distilled: Checkpoint,
    scratch: Checkpoint,
    eval_instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    teacher: Checkpoint | None = None,
    k: int = 1,
) -> dict:
    """Side-by-side greedy edit-distance report for distilled vs from-scratch
    students (and optionally the teacher), plus per-channel deltas."""
    rows = {}
    if teacher is not None:
        rows["teacher"] = _greedy_report(teacher, eval_instances, taxonomy, k).to_dict()
    rows["scratch"] = _greedy_report(scratch, eval_instances, taxonomy, k).to_dict()
    rows["distilled"] = _greedy_report(distilled, eval_instances, taxonomy, k).to_dict()
    deltas = {
        f"{channel}_ed": rows["distilled"][f"{channel}_ed"] - rows["scratch"][f"{channel}_ed"]
        for channel in CHANNELS
    }
    return {"rows": rows, "distilled_minus_scratch": deltas, "n_eval": len(eval_instances)}


def aggregate_seed_runs(reports: Sequence[dict]) -> dict:
    """Mean and spread of per-seed comparison reports."""
    out: dict = {"n_seeds": len(reports)}
    for row in ("teacher", "scratch", "distilled"):
        if not all(row in rep["rows"] for rep in reports):
            continue
        stats = {}
        for channel in CHANNELS:
            values = [rep["rows"][row][f"{channel}_ed"] for rep in reports]
            stats[f"{channel}_ed"] = {
                "mean": float(np.mean(values)),
                "spread": float(np.std(values)),
            }
        out[row] = stats
    out["distilled_wins_action"] = sum(
        1 for rep in reports if rep["distilled_minus_scratch"]["action_ed"] < 0
    )
    return out
