"""Compact transformer over action tokens, in parallel-decode and
autoregressive flavors, with optional goal conditioning.

Parallel mode encodes the observed actions (verb and noun embeddings summed
per step) plus one learnable query position per future step, full attention,
and decodes each query with separate verb and noun heads. Autoregressive mode
models an interleaved verb/noun token stream with causal attention and a
single next-token head; decoding constrains each step to the expected token
class, so emitted labels are always in-vocabulary.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..dataset import LtaInstance
from ..errors import ConfigMismatch, EmptyCorpus, TrainingDiverged
from ..seeding import derive_seed
from ..taxonomy import Taxonomy

PARALLEL = "parallel"
AUTOREGRESSIVE = "autoregressive"


@dataclass(frozen=True)
class SeqModelConfig:
    """Architecture and optimization settings for the sequence model."""

    layers: int = 2
    heads: int = 2
    hidden_dim: int = 64
    context_len: int = 96
    decode_mode: str = PARALLEL
    goal_conditioning: bool = False
    learning_rate: float = 0.5
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 32
    warmup_epochs: int = 3
    grad_clip: float = 1.0
    ffn_mult: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.decode_mode not in (PARALLEL, AUTOREGRESSIVE):
            raise ConfigMismatch(f"unknown decode mode {self.decode_mode!r}")
        if min(self.layers, self.heads, self.hidden_dim, self.context_len) < 1:
            raise ConfigMismatch("model dimensions must be positive")
        if self.hidden_dim % self.heads:
            raise ConfigMismatch("hidden_dim must be divisible by heads")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigMismatch("epochs and batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "SeqModelConfig":
        return SeqModelConfig(**data)


@dataclass(frozen=True)
class ModelBindings:
    """Data-dependent shape information fixed at training time."""

    n_verbs: int
    n_nouns: int
    n_seg: int
    z: int
    goal_vocab: tuple[str, ...] = ()
    taxonomy_fingerprint: str = ""

    @property
    def n_actions(self) -> int:
        return self.n_verbs * self.n_nouns

    @property
    def n_action_tokens(self) -> int:
        return self.n_verbs + self.n_nouns

    def goal_id(self, goal: str | None) -> int:
        """Resolve a goal string to an embedding id.

        Empty or unknown goals map to the learned null-goal id 0.
        """
        if not goal:
            return 0
        try:
            return 1 + self.goal_vocab.index(goal)
        except ValueError:
            return 0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["goal_vocab"] = list(self.goal_vocab)
        return data

    @staticmethod
    def from_dict(data: dict) -> "ModelBindings":
        data = dict(data)
        data["goal_vocab"] = tuple(data.get("goal_vocab", ()))
        return ModelBindings(**data)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, causal: bool) -> torch.Tensor:
        batch, length, dim = x.shape
        head_dim = dim // self.heads
        q, k, v = self.qkv(x).split(dim, dim=2)
        q = q.view(batch, length, self.heads, head_dim).transpose(1, 2)
        k = k.view(batch, length, self.heads, head_dim).transpose(1, 2)
        v = v.view(batch, length, self.heads, head_dim).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
        if causal:
            mask = torch.triu(
                torch.ones(length, length, dtype=torch.bool, device=x.device), diagonal=1
            )
            att = att.masked_fill(mask, float("-inf"))
        att = F.softmax(att, dim=-1)
        out = (att @ v).transpose(1, 2).contiguous().view(batch, length, dim)
        return self.proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.GELU(), nn.Linear(ffn_mult * dim, dim)
        )

    def forward(self, x: torch.Tensor, causal: bool) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), causal)
        return x + self.mlp(self.ln2(x))


class ActionSequenceModel(nn.Module):
    """Transformer over action tokens; see the module docstring for modes."""

    def __init__(self, config: SeqModelConfig, bindings: ModelBindings):
        super().__init__()
        self.config = config
        self.bindings = bindings
        dim = config.hidden_dim
        self.pos_emb = nn.Embedding(config.context_len, dim)
        if config.decode_mode == PARALLEL:
            self.verb_emb = nn.Embedding(bindings.n_verbs, dim)
            self.noun_emb = nn.Embedding(bindings.n_nouns, dim)
            self.query_emb = nn.Embedding(bindings.z, dim)
            self.verb_head = nn.Linear(dim, bindings.n_verbs)
            self.noun_head = nn.Linear(dim, bindings.n_nouns)
        else:
            self.token_emb = nn.Embedding(bindings.n_action_tokens, dim)
            self.lm_head = nn.Linear(dim, bindings.n_action_tokens)
        if config.goal_conditioning:
            self.goal_emb = nn.Embedding(len(bindings.goal_vocab) + 1, dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(dim, config.heads, config.ffn_mult) for _ in range(config.layers)
        )
        self.ln_f = nn.LayerNorm(dim)

    @property
    def goal_conditioned(self) -> bool:
        return self.config.goal_conditioning

    @property
    def goal_slot(self) -> int:
        return 1 if self.config.goal_conditioning else 0

    def _run(self, x: torch.Tensor, causal: bool) -> torch.Tensor:
        length = x.shape[1]
        if length > self.config.context_len:
            raise ConfigMismatch(
                f"sequence length {length} exceeds context_len {self.config.context_len}"
            )
        positions = torch.arange(length, device=x.device)
        x = x + self.pos_emb(positions)[None]
        for block in self.blocks:
            x = block(x, causal)
        return self.ln_f(x)

    def _prepend_goal(self, x: torch.Tensor, goal_ids: torch.Tensor | None) -> torch.Tensor:
        if not self.config.goal_conditioning:
            return x
        if goal_ids is None:
            goal_ids = torch.zeros(x.shape[0], dtype=torch.long, device=x.device)
        return torch.cat([self.goal_emb(goal_ids)[:, None, :], x], dim=1)

    def forward_parallel(
        self,
        verb_ids: torch.Tensor,
        noun_ids: torch.Tensor,
        goal_ids: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Observed (batch, n_seg) id pairs to per-future-step logits."""
        if self.config.decode_mode != PARALLEL:
            raise ConfigMismatch("model is not in parallel decode mode")
        batch = verb_ids.shape[0]
        obs = self.verb_emb(verb_ids) + self.noun_emb(noun_ids)
        queries = self.query_emb.weight[None].expand(batch, -1, -1)
        x = self._prepend_goal(torch.cat([obs, queries], dim=1), goal_ids)
        hidden = self._run(x, causal=False)
        out = hidden[:, self.goal_slot + verb_ids.shape[1] :, :]
        return self.verb_head(out), self.noun_head(out)

    def forward_tokens(
        self, tokens: torch.Tensor, goal_ids: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Causal next-token logits for an interleaved verb/noun stream.

        Returned logits are aligned with the model input including the goal
        slot, so ``logits[:, t]`` predicts input position ``t + 1``.
        """
        if self.config.decode_mode != AUTOREGRESSIVE:
            raise ConfigMismatch("model is not in autoregressive decode mode")
        x = self._prepend_goal(self.token_emb(tokens), goal_ids)
        hidden = self._run(x, causal=True)
        return self.lm_head(hidden)

    # decoding interface

    def begin(self, observed: tuple[int, ...], goal_id: int | None = None) -> dict:
        """Prepare per-instance decoding state from composite action ids."""
        if goal_id is not None and not self.config.goal_conditioning:
            raise ConfigMismatch("model was not trained with goal conditioning")
        ctx: dict = {"observed": tuple(observed), "goal_id": goal_id}
        if self.config.decode_mode == PARALLEL:
            verb_ids, noun_ids = _split_composite(observed, self.bindings.n_nouns)
            goals = None
            if self.config.goal_conditioning:
                goals = torch.tensor([goal_id or 0], dtype=torch.long)
            with torch.no_grad():
                verb_logits, noun_logits = self.forward_parallel(
                    torch.tensor([verb_ids], dtype=torch.long),
                    torch.tensor([noun_ids], dtype=torch.long),
                    goals,
                )
                ctx["verb_probs"] = F.softmax(verb_logits[0], dim=-1).double().numpy()
                ctx["noun_probs"] = F.softmax(noun_logits[0], dim=-1).double().numpy()
        else:
            ctx["tokens"] = list(_composite_to_tokens(observed, self.bindings))
        return ctx

    def step(self, ctx: dict, chosen: tuple[int, ...], position: int) -> np.ndarray:
        """Joint next-action distribution (flattened verb x noun) at a step."""
        if self.config.decode_mode == PARALLEL:
            if position >= self.bindings.z:
                raise ConfigMismatch(
                    f"parallel model decodes at most {self.bindings.z} positions"
                )
            return np.outer(ctx["verb_probs"][position], ctx["noun_probs"][position]).ravel()
        return self._step_autoregressive(ctx, chosen)

    def _step_autoregressive(self, ctx: dict, chosen: tuple[int, ...]) -> np.ndarray:
        n_verbs, n_nouns = self.bindings.n_verbs, self.bindings.n_nouns
        prefix = ctx["tokens"] + list(_composite_to_tokens(chosen, self.bindings))
        goal_ids = None
        if self.config.goal_conditioning:
            goal_ids = torch.tensor([ctx["goal_id"] or 0], dtype=torch.long)
        with torch.no_grad():
            tokens = torch.tensor([prefix], dtype=torch.long)
            logits = self.forward_tokens(tokens, goal_ids)[0, -1]
            verb_probs = F.softmax(logits[:n_verbs], dim=-1).double().numpy()
            batch = torch.tensor(
                [prefix + [v] for v in range(n_verbs)], dtype=torch.long
            )
            batch_goals = None
            if goal_ids is not None:
                batch_goals = goal_ids.expand(n_verbs)
            noun_logits = self.forward_tokens(batch, batch_goals)[:, -1, n_verbs:]
            noun_probs = F.softmax(noun_logits, dim=-1).double().numpy()
        return (verb_probs[:, None] * noun_probs).ravel()

    def position_distributions(
        self, observed: Sequence[int], goal_id: int | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Parallel-mode per-position verb and noun probability matrices."""
        ctx = self.begin(tuple(observed), goal_id)
        return ctx["verb_probs"], ctx["noun_probs"]

    def target_log_softmax(
        self,
        tokens: torch.Tensor,
        goal_ids: torch.Tensor | None,
        n_observed_tokens: int,
    ) -> torch.Tensor:
        """Log next-token distributions at the target positions (AR mode)."""
        logits = self.forward_tokens(tokens, goal_ids)
        start = self.goal_slot + n_observed_tokens - 1
        end = self.goal_slot + tokens.shape[1] - 1
        return F.log_softmax(logits[:, start:end, :], dim=-1)


def _split_composite(
    actions: Sequence[int], n_nouns: int
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    verbs = tuple(a // n_nouns for a in actions)
    nouns = tuple(a % n_nouns for a in actions)
    return verbs, nouns


def _composite_to_tokens(actions: Sequence[int], bindings: ModelBindings) -> list[int]:
    tokens = []
    for action in actions:
        verb_id, noun_id = divmod(action, bindings.n_nouns)
        tokens.append(verb_id)
        tokens.append(bindings.n_verbs + noun_id)
    return tokens


@dataclass
class TrainingTensors:
    verb_obs: torch.Tensor
    noun_obs: torch.Tensor
    verb_fut: torch.Tensor
    noun_fut: torch.Tensor
    tokens: torch.Tensor
    goal_ids: torch.Tensor | None
    n_obs_tokens: int


def prepare_training_tensors(
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    bindings: ModelBindings,
    conditioned: bool,
) -> TrainingTensors:
    verb_obs = torch.tensor(
        [[lab.verb_id for lab in inst.observed] for inst in instances], dtype=torch.long
    )
    noun_obs = torch.tensor(
        [[lab.noun_id for lab in inst.observed] for inst in instances], dtype=torch.long
    )
    verb_fut = torch.tensor(
        [[lab.verb_id for lab in inst.future_gt] for inst in instances], dtype=torch.long
    )
    noun_fut = torch.tensor(
        [[lab.noun_id for lab in inst.future_gt] for inst in instances], dtype=torch.long
    )
    tokens = torch.tensor(
        [
            _composite_to_tokens(
                [taxonomy.action_id(lab) for lab in inst.observed + inst.future_gt], bindings
            )
            for inst in instances
        ],
        dtype=torch.long,
    )
    goal_ids = None
    if conditioned:
        goal_ids = torch.tensor(
            [bindings.goal_id(inst.goal) for inst in instances], dtype=torch.long
        )
    return TrainingTensors(
        verb_obs=verb_obs,
        noun_obs=noun_obs,
        verb_fut=verb_fut,
        noun_fut=noun_fut,
        tokens=tokens,
        goal_ids=goal_ids,
        n_obs_tokens=2 * bindings.n_seg,
    )


def batch_loss(
    model: ActionSequenceModel,
    tensors: TrainingTensors,
    index: torch.Tensor,
    teacher: ActionSequenceModel | None = None,
    kl_weight: float = 0.0,
    kl_temperature: float = 1.0,
) -> torch.Tensor:
    """Training loss on one batch; adds the distillation term when a frozen
    teacher and positive weight are supplied."""
    goal_ids = tensors.goal_ids[index] if tensors.goal_ids is not None else None
    if model.config.decode_mode == PARALLEL:
        verb_logits, noun_logits = model.forward_parallel(
            tensors.verb_obs[index], tensors.noun_obs[index], goal_ids
        )
        ce_verb = F.cross_entropy(
            verb_logits.reshape(-1, model.bindings.n_verbs), tensors.verb_fut[index].reshape(-1)
        )
        ce_noun = F.cross_entropy(
            noun_logits.reshape(-1, model.bindings.n_nouns), tensors.noun_fut[index].reshape(-1)
        )
        return 0.5 * (ce_verb + ce_noun)

    tokens = tensors.tokens[index]
    targets = tokens[:, tensors.n_obs_tokens :]
    log_probs = model.target_log_softmax(tokens, goal_ids, tensors.n_obs_tokens)
    loss = F.nll_loss(
        log_probs.reshape(-1, model.bindings.n_action_tokens), targets.reshape(-1)
    )
    if teacher is not None and kl_weight > 0.0:
        with torch.no_grad():
            teacher_logits = teacher.forward_tokens(tokens, goal_ids)
            start = teacher.goal_slot + tensors.n_obs_tokens - 1
            end = teacher.goal_slot + tokens.shape[1] - 1
            teacher_logits = teacher_logits[:, start:end, :]
        loss = loss + kl_weight * kl_to_teacher(teacher_logits, log_probs, kl_temperature)
    return loss


def kl_to_teacher(
    teacher_logits: torch.Tensor, student_log_probs: torch.Tensor, temperature: float = 1.0
) -> torch.Tensor:
    """Forward KL(teacher || student) summed over target tokens, batch mean."""
    if temperature != 1.0:
        teacher_log = F.log_softmax(teacher_logits / temperature, dim=-1)
        student_log = F.log_softmax(student_log_probs / temperature, dim=-1)
    else:
        teacher_log = F.log_softmax(teacher_logits, dim=-1)
        student_log = student_log_probs
    teacher_probs = teacher_log.exp()
    kl = (teacher_probs * (teacher_log - student_log)).sum(dim=-1)
    return kl.sum(dim=1).mean()


def _epoch_lr(config: SeqModelConfig, epoch: int) -> float:
    if epoch < config.warmup_epochs:
        return config.learning_rate * (epoch + 1) / config.warmup_epochs
    span = max(1, config.epochs - config.warmup_epochs)
    progress = (epoch - config.warmup_epochs) / span
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))


def train_seq_model(
    instances: Iterable[LtaInstance],
    taxonomy: Taxonomy,
    config: SeqModelConfig,
    teacher: ActionSequenceModel | None = None,
    kl_weight: float = 0.0,
    kl_temperature: float = 1.0,
):
    """Train a sequence model; returns a Checkpoint.

    Training is deterministic for a given (instances, config) pair: parameter
    init, batch order, and updates all derive from ``config.seed``, and torch
    runs single-threaded for bit-stable reductions. The optimizer is Nesterov
    momentum SGD with a cosine-decayed learning rate and optional linear
    warmup.
    """
    from .checkpoint import checkpoint_from_model

    instances = list(instances)
    if not instances:
        raise EmptyCorpus("no training instances")
    n_seg = len(instances[0].observed)
    z = len(instances[0].future_gt)
    if any(len(i.observed) != n_seg or len(i.future_gt) != z for i in instances):
        raise ConfigMismatch("instances have inconsistent observed/future lengths")

    goal_vocab: tuple[str, ...] = ()
    if config.goal_conditioning:
        goal_vocab = tuple(sorted({i.goal for i in instances if i.goal}))
    bindings = ModelBindings(
        n_verbs=taxonomy.n_verbs,
        n_nouns=taxonomy.n_nouns,
        n_seg=n_seg,
        z=z,
        goal_vocab=goal_vocab,
        taxonomy_fingerprint=taxonomy.fingerprint(),
    )
    goal_slot = 1 if config.goal_conditioning else 0
    needed = goal_slot + (
        n_seg + z if config.decode_mode == PARALLEL else 2 * (n_seg + z)
    )
    if needed > config.context_len:
        raise ConfigMismatch(
            f"context_len {config.context_len} too small for {needed} positions"
        )
    if teacher is not None:
        _check_teacher(teacher, config, bindings)

    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        torch.manual_seed(derive_seed(config.seed, "init"))
        model = ActionSequenceModel(config, bindings)
        tensors = prepare_training_tensors(instances, taxonomy, bindings, config.goal_conditioning)
        optimizer = torch.optim.SGD(
            model.parameters(), lr=config.learning_rate, momentum=config.momentum, nesterov=True
        )
        shuffle_rng = random.Random(derive_seed(config.seed, "data"))
        loss_curve = []
        order = list(range(len(instances)))
        for epoch in range(config.epochs):
            lr = _epoch_lr(config, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            shuffle_rng.shuffle(order)
            total, seen = 0.0, 0
            for start in range(0, len(order), config.batch_size):
                index = torch.tensor(order[start : start + config.batch_size], dtype=torch.long)
                optimizer.zero_grad()
                loss = batch_loss(model, tensors, index, teacher, kl_weight, kl_temperature)
                loss.backward()
                if config.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optimizer.step()
                total += loss.item() * len(index)
                seen += len(index)
            epoch_loss = total / seen
            if not math.isfinite(epoch_loss):
                raise TrainingDiverged(f"epoch {epoch}: loss {epoch_loss}")
            loss_curve.append(epoch_loss)
    finally:
        torch.set_num_threads(prev_threads)

    model.eval()
    metadata = {"loss_curve": loss_curve, "seed": config.seed}
    if teacher is not None:
        metadata["distilled"] = {"kl_weight": kl_weight, "kl_temperature": kl_temperature}
    return checkpoint_from_model(model, metadata)


def _check_teacher(
    teacher: ActionSequenceModel, config: SeqModelConfig, bindings: ModelBindings
) -> None:
    if teacher.config.decode_mode != AUTOREGRESSIVE or config.decode_mode != AUTOREGRESSIVE:
        raise ConfigMismatch("distillation requires autoregressive teacher and student")
    tb = teacher.bindings
    if (tb.n_verbs, tb.n_nouns) != (bindings.n_verbs, bindings.n_nouns):
        raise ConfigMismatch("teacher and student vocabulary sizes differ")
    if tb.taxonomy_fingerprint != bindings.taxonomy_fingerprint:
        raise ConfigMismatch("teacher was trained on a different taxonomy")
    if teacher.config.goal_conditioning != config.goal_conditioning:
        raise ConfigMismatch("teacher and student goal conditioning differ")
    if teacher.config.goal_conditioning and tb.goal_vocab != bindings.goal_vocab:
        raise ConfigMismatch("teacher and student goal vocabularies differ")
    teacher.eval()
