"""Prompt construction, chat-completion client, response cache, and mock."""

from .prompts import (
    BOTTOM_UP_ICL,
    COT,
    COUNTERFACTUAL,
    FINE_TUNE_SAMPLE,
    GOAL_ICL,
    PromptBundle,
    build_cot_prompt,
    build_goal_prompt,
    build_icl_prompt,
    counterfactual_pair,
    default_instruction,
    goal_query,
    parse_cot_completion,
    sample_examples,
)
from .client import HttpLlmClient, LlmRequest, LlmResponse, complete, complete_many
from .cache import CachingClient, ResponseCache
from .mock import MockLlm, make_clean_completion, plant_incidents
from .finetune import (
    BOTH,
    GT_ONLY,
    RECOG_ONLY,
    build_finetune_samples,
    write_finetune_samples,
)

__all__ = [
    "BOTH",
    "BOTTOM_UP_ICL",
    "COT",
    "COUNTERFACTUAL",
    "CachingClient",
    "FINE_TUNE_SAMPLE",
    "GOAL_ICL",
    "GT_ONLY",
    "HttpLlmClient",
    "LlmRequest",
    "LlmResponse",
    "MockLlm",
    "PromptBundle",
    "RECOG_ONLY",
    "ResponseCache",
    "build_cot_prompt",
    "build_finetune_samples",
    "build_goal_prompt",
    "build_icl_prompt",
    "complete",
    "complete_many",
    "counterfactual_pair",
    "default_instruction",
    "goal_query",
    "make_clean_completion",
    "parse_cot_completion",
    "plant_incidents",
    "sample_examples",
    "write_finetune_samples",
]
