"""End-to-end experiment runs: data, training, prediction, scoring, reports.

Every run writes a self-describing directory: a manifest (resolved config,
config hash, taxonomy fingerprint, code version) plus deterministic report
files. Re-running from the manifest with a mock or cached LLM reproduces the
reports byte-for-byte, so no volatile values (timestamps, absolute paths,
cache statistics) ever go into report files.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from collections import Counter
from pathlib import Path
from typing import Sequence

from .. import __version__
from ..dataset import (
    LtaInstance,
    VideoAnnotation,
    corrupt_observations,
    ingest_annotations,
    make_lta_instances,
)
from ..errors import ConfigError
from ..llm import (
    BOTTOM_UP_ICL,
    COT,
    CachingClient,
    HttpLlmClient,
    MockLlm,
    build_cot_prompt,
    build_icl_prompt,
    complete,
    complete_many,
    counterfactual_pair,
    default_instruction,
    goal_query,
    sample_examples,
)
from ..llm.prompts import parse_cot_completion
from ..metrics import CandidateSet, evaluate_lta
from ..models import (
    Beam,
    Greedy,
    NgramModel,
    SeqModelConfig,
    TopP,
    load_checkpoint,
    load_model,
    predict,
    predict_topdown,
    train_ngram,
    train_seq_model,
)
from ..postprocess import IncidentStats, postprocess_candidates
from ..seeding import derive_seed
from ..taxonomy import (
    INDICES,
    SHUFFLED,
    ActionLabel,
    LabelRendering,
    Taxonomy,
    load_taxonomy,
    render_sequence,
)
from .config import ExperimentConfig
from .synthetic import generate_synthetic, grammar_from_spec


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def config_hash(config: ExperimentConfig) -> str:
    data = config.to_dict()
    data.pop("output_dir", None)
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _git_commit() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def load_run_data(
    config: ExperimentConfig,
) -> tuple[Taxonomy, list[VideoAnnotation], list[VideoAnnotation]]:
    """Resolve the taxonomy and (train, eval) video lists for a run."""
    eval_split = config.eval["split"]
    if config.synthetic is not None:
        grammar = grammar_from_spec(config.synthetic)
        taxonomy = grammar.taxonomy()

        def gen(split: str) -> list[VideoAnnotation]:
            spec = config.synthetic.get(split)
            if not spec:
                raise ConfigError(f"synthetic section missing {split!r} spec")
            return generate_synthetic(
                grammar,
                n_videos=int(spec["n_videos"]),
                length=int(spec["length"]),
                seed=derive_seed(config.seed, "data", split),
                split=split,
                stop_at=spec.get("stop_at"),
            )

        return taxonomy, gen("train"), gen(eval_split)
    taxonomy = load_taxonomy(config.taxonomy_path)
    videos = ingest_annotations(config.annotations_path, taxonomy)
    train = [v for v in videos if v.split == "train"]
    evals = [v for v in videos if v.split == eval_split]
    if not train or not evals:
        raise ConfigError(f"need videos in both 'train' and {eval_split!r} splits")
    return taxonomy, train, evals


def _instances(videos: Sequence[VideoAnnotation], n_seg: int, z: int) -> list[LtaInstance]:
    out: list[LtaInstance] = []
    for video in videos:
        out.extend(make_lta_instances(video, n_seg, z))
    return out


def _noisy_queries(
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    noise_rate: float,
    root_seed: int,
) -> list[LtaInstance]:
    if noise_rate <= 0:
        return list(instances)
    return [
        corrupt_observations(
            inst, taxonomy, noise_rate, derive_seed(root_seed, "noise", inst.instance_id)
        )
        for inst in instances
    ]


def strategy_from_spec(spec: dict, seed: int):
    kind = spec.get("kind", "greedy")
    if kind == "greedy":
        return Greedy()
    if kind == "beam":
        return Beam(width=int(spec.get("width", 5)))
    if kind == "topp":
        return TopP(
            p=float(spec.get("p", 0.9)),
            temperature=float(spec.get("temperature", 1.0)),
            seed=derive_seed(seed, "sampling"),
        )
    raise ConfigError(f"unknown strategy {kind!r}")


def most_frequent_action(instances: Sequence[LtaInstance], taxonomy: Taxonomy) -> ActionLabel:
    """Fallback for completions with no parseable action at all."""
    counts: Counter = Counter()
    for inst in instances:
        for label in inst.observed + inst.future_gt:
            counts[taxonomy.action_id(label)] += 1
    if not counts:
        return ActionLabel(0, 0)
    best = min(counts, key=lambda action: (-counts[action], action))
    return taxonomy.label_of(best)


def _rendering(config: ExperimentConfig, taxonomy: Taxonomy) -> LabelRendering:
    return LabelRendering.from_dict(config.rendering or {"mode": "canonical"}, taxonomy)


def _dump_predictions(
    path: Path,
    predictions: dict[str, CandidateSet],
    taxonomy: Taxonomy,
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for instance_id in sorted(predictions):
            candidates = predictions[instance_id]
            handle.write(
                json.dumps(
                    {
                        "instance_id": instance_id,
                        "candidates": [
                            [
                                [
                                    taxonomy.display_verb[label.verb_id],
                                    taxonomy.display_noun[label.noun_id],
                                ]
                                for label in seq
                            ]
                            for seq in candidates.sequences
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def build_echo_client(
    instances: Sequence[LtaInstance],
    taxonomy: Taxonomy,
    kind: str = BOTTOM_UP_ICL,
    rendering: LabelRendering | None = None,
) -> MockLlm:
    """A mock that answers each instance's query with its ground-truth future."""
    by_query: dict[str, str] = {}
    for inst in instances:
        observed_text = render_sequence(inst.observed, taxonomy, rendering)
        future_text = render_sequence(inst.future_gt, taxonomy, rendering)
        if kind == COT:
            completion = f"Goal: {inst.goal or 'unknown'}. Actions: {future_text}"
        else:
            completion = future_text
        by_query[observed_text] = completion
        by_query[goal_query(inst.goal or "", observed_text)] = future_text

    def handler(request):
        last_line = request.prompt.rsplit("\n", 1)[-1]
        body = last_line[:-4] if last_line.endswith(" => ") else last_line
        return [by_query.get(body, "")] * request.n_completions

    return MockLlm(handler=handler)


def _resolve_client(
    config: ExperimentConfig, client, eval_instances, taxonomy, kind, rendering=None
):
    if client is None:
        mock = config.llm.get("mock")
        if mock == "echo":
            client = build_echo_client(eval_instances, taxonomy, kind, rendering)
        elif config.llm.get("endpoint"):
            client = HttpLlmClient(
                endpoint_url=config.llm["endpoint"], model=config.llm.get("model", "default")
            )
        else:
            raise ConfigError("LLM approach needs a client, a mock, or an endpoint")
    if config.llm.get("cache_path"):
        client = CachingClient(client, config.llm["cache_path"])
    return client


def _neural_config(config: ExperimentConfig, goal_conditioning: bool) -> SeqModelConfig:
    params = {k: v for k, v in config.model.items() if k != "kind"}
    params.setdefault("context_len", 2 * (config.n_seg + config.z) + 1)
    params["goal_conditioning"] = goal_conditioning
    params["seed"] = derive_seed(config.seed, "init")
    try:
        return SeqModelConfig(**params)
    except TypeError as exc:
        raise ConfigError(f"bad neural model config: {exc}") from None


def _local_flow(
    config: ExperimentConfig,
    run_dir: Path,
    taxonomy: Taxonomy,
    train_instances: list[LtaInstance],
    eval_instances: list[LtaInstance],
) -> dict:
    topdown = config.approach == "top_down_local"
    kind = config.model.get("kind", "ngram")
    if kind == "ngram":
        if topdown:
            raise ConfigError("the n-gram baseline cannot be goal-conditioned")
        model = train_ngram(
            train_instances,
            taxonomy,
            order=int(config.model.get("order", 2)),
            alpha=float(config.model.get("alpha", 0.1)),
        )
        _write_json(run_dir / "model.ngram.json", model.to_dict())
    elif kind == "neural":
        checkpoint = train_seq_model(
            train_instances, taxonomy, _neural_config(config, topdown)
        )
        checkpoint.save(run_dir / "model.ckpt")
        model = load_model(checkpoint)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")

    strategy = strategy_from_spec(config.eval["strategy"], config.seed)
    queries = _noisy_queries(
        eval_instances, taxonomy, float(config.eval["noise_rate"]), config.seed
    )
    predictions = {}
    for inst in queries:
        if topdown:
            candidates = predict_topdown(
                model, inst.observed, inst.goal, config.z, config.k, strategy, taxonomy
            )
        else:
            candidates = predict(
                model, inst.observed, config.z, config.k, strategy, taxonomy
            )
        predictions[inst.instance_id] = candidates
    gts = {inst.instance_id: inst.future_gt for inst in eval_instances}
    report = evaluate_lta(predictions, gts)
    _dump_predictions(run_dir / "predictions.jsonl", predictions, taxonomy)
    return {
        "approach": config.approach,
        "model_kind": kind,
        "ed": report.to_dict(),
        "n_train_instances": len(train_instances),
        "n_eval_instances": len(eval_instances),
        "strategy": config.eval["strategy"],
    }


def _llm_flow(
    config: ExperimentConfig,
    run_dir: Path,
    taxonomy: Taxonomy,
    train_instances: list[LtaInstance],
    eval_instances: list[LtaInstance],
    client,
) -> dict:
    kind = BOTTOM_UP_ICL if config.approach == "llm_icl" else COT
    rendering = _rendering(config, taxonomy)
    if rendering.mode == INDICES:
        raise ConfigError(
            "index rendering has no word-level parse path; use it for finetune export"
        )
    unmap = rendering.inverse() if rendering.mode == SHUFFLED else None
    queries = _noisy_queries(
        eval_instances, taxonomy, float(config.eval["noise_rate"]), config.seed
    )
    client = _resolve_client(config, client, queries, taxonomy, kind, rendering)

    pool = sample_examples(
        train_instances,
        int(config.llm["n_examples"]),
        derive_seed(config.seed, "icl-examples"),
    )
    instruction = default_instruction(
        kind, taxonomy, config.z, bool(config.llm["inline_vocab"])
    )
    fallback = most_frequent_action(train_instances, taxonomy)
    strict = bool(config.eval.get("strict_repair", False))
    map_threshold = int(config.eval.get("map_threshold", 3))

    bundles = []
    for inst in queries:
        if kind == BOTTOM_UP_ICL:
            bundles.append(
                build_icl_prompt(
                    instruction,
                    [(ex.observed, ex.future_gt) for ex in pool],
                    inst.observed,
                    taxonomy,
                    rendering,
                )
            )
        else:
            bundles.append(
                build_cot_prompt(
                    instruction,
                    [(ex.observed, ex.goal or "unknown", ex.future_gt) for ex in pool],
                    inst.observed,
                    taxonomy,
                    rendering,
                )
            )
    prompts_dir = run_dir / "prompts"
    for index, bundle in enumerate(bundles[: int(config.eval.get("prompt_snapshots", 3))]):
        prompts_dir.mkdir(parents=True, exist_ok=True)
        (prompts_dir / f"prompt_{index:03d}.txt").write_text(bundle.render())

    responses = complete_many(
        client,
        bundles,
        n=config.k,
        temperature=float(config.llm["temperature"]),
        max_concurrency=int(config.llm.get("max_concurrency", 1)),
        max_tokens=int(config.llm["max_tokens"]),
        model=config.llm.get("model", "default"),
    )

    predictions = {}
    stats = IncidentStats()
    goals_out = []
    missing_goal = 0
    for inst, response in zip(queries, responses):
        completions = response.completions
        if kind == COT:
            stripped = []
            for text in completions:
                goal, actions_text, found = parse_cot_completion(text)
                if not found:
                    missing_goal += 1
                stripped.append(actions_text)
                goals_out.append(
                    {"instance_id": inst.instance_id, "goal": goal, "goal_found": found}
                )
            completions = stripped
        candidates, instance_stats = postprocess_candidates(
            completions, config.z, taxonomy, fallback,
            map_threshold=map_threshold, strict=strict,
        )
        stats.merge(instance_stats)
        if unmap is not None:
            # parsed labels live in the rendering's permuted space
            candidates = CandidateSet.from_lists(
                [unmap.map_label(label) for label in seq] for seq in candidates.sequences
            )
        predictions[inst.instance_id] = candidates

    gts = {inst.instance_id: inst.future_gt for inst in eval_instances}
    report = evaluate_lta(predictions, gts)
    _dump_predictions(run_dir / "predictions.jsonl", predictions, taxonomy)
    _write_json(run_dir / "incidents.json", stats.to_dict())
    result = {
        "approach": config.approach,
        "ed": report.to_dict(),
        "incidents": stats.to_dict(),
        "n_train_instances": len(train_instances),
        "n_eval_instances": len(eval_instances),
        "n_examples": len(pool),
    }
    if kind == COT:
        with open(run_dir / "goals.jsonl", "w", encoding="utf-8") as handle:
            for record in goals_out:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        result["goal_stats"] = {"missing_goal": missing_goal, "n_completions": len(goals_out)}
    return result


def _finetune_export_flow(
    config: ExperimentConfig,
    run_dir: Path,
    taxonomy: Taxonomy,
    train_instances: list[LtaInstance],
) -> dict:
    from ..llm import build_finetune_samples, write_finetune_samples

    section = config.llm.get("finetune", {})
    mix = section.get("mix", "gt_only")
    with_goal = bool(section.get("with_goal", False))
    noise_rate = float(section.get("noise_rate", 0.3))
    recognized = None
    if mix != "gt_only":
        recognized = _noisy_queries(train_instances, taxonomy, noise_rate, config.seed)
    samples = build_finetune_samples(
        train_instances,
        taxonomy,
        with_goal=with_goal,
        mix=mix,
        recognized=recognized,
        rendering=_rendering(config, taxonomy),
    )
    write_finetune_samples(samples, run_dir / "finetune_samples.jsonl")
    return {
        "approach": config.approach,
        "n_samples": len(samples),
        "mix": mix,
        "with_goal": with_goal,
        "n_train_instances": len(train_instances),
    }


def _distill_flow(
    config: ExperimentConfig,
    run_dir: Path,
    taxonomy: Taxonomy,
    train_instances: list[LtaInstance],
    eval_instances: list[LtaInstance],
) -> dict:
    from ..distill import DistillConfig, compare_students, distill_train

    section = dict(config.distill)
    teacher_params = dict(section.get("teacher", {}))
    student_params = dict(section.get("student", {}))
    student_subset = int(section.get("student_corpus", len(train_instances)))
    kl_weight = float(section.get("kl_weight", 1.0))
    kl_temperature = float(section.get("kl_temperature", 1.0))

    default_context = 2 * (config.n_seg + config.z) + 1
    student_params.setdefault("context_len", default_context)
    student_params["decode_mode"] = "autoregressive"
    student_params["seed"] = derive_seed(config.seed, "student")

    if section.get("teacher_checkpoint"):
        teacher = load_checkpoint(section["teacher_checkpoint"])
    else:
        teacher_params.setdefault("context_len", default_context)
        teacher_params["decode_mode"] = "autoregressive"
        teacher_params["seed"] = derive_seed(config.seed, "teacher")
        teacher = train_seq_model(
            train_instances, taxonomy, SeqModelConfig(**teacher_params)
        )
    teacher.save(run_dir / "teacher.ckpt")
    student_corpus = train_instances[:student_subset]
    student_config = SeqModelConfig(**student_params)
    scratch = train_seq_model(student_corpus, taxonomy, student_config)
    scratch.save(run_dir / "scratch.ckpt")
    distilled = distill_train(
        DistillConfig(
            teacher=teacher,
            student=student_config,
            kl_weight=kl_weight,
            kl_temperature=kl_temperature,
        ),
        student_corpus,
        taxonomy,
    )
    distilled.save(run_dir / "distilled.ckpt")
    comparison = compare_students(
        distilled, scratch, eval_instances, taxonomy, teacher=teacher, k=1
    )
    return {
        "approach": config.approach,
        "comparison": comparison,
        "kl_weight": kl_weight,
        "kl_temperature": kl_temperature,
        "n_train_instances": len(train_instances),
        "n_student_instances": len(student_corpus),
        "n_eval_instances": len(eval_instances),
    }


def run_experiment(config: ExperimentConfig, client=None) -> Path:
    """Execute one experiment and return its run directory."""
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    taxonomy, train_videos, eval_videos = load_run_data(config)
    train_instances = _instances(train_videos, config.n_seg, config.z)
    eval_instances = _instances(eval_videos, config.n_seg, config.z)
    if not train_instances or not eval_instances:
        raise ConfigError("no instances after windowing; check n_seg/z vs video length")

    manifest = {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "taxonomy_fingerprint": taxonomy.fingerprint(),
        "git_commit": _git_commit(),
        "antkit_version": __version__,
    }
    _write_json(run_dir / "manifest.json", manifest)

    if config.approach in ("bottom_up_local", "top_down_local"):
        report = _local_flow(config, run_dir, taxonomy, train_instances, eval_instances)
    elif config.approach in ("llm_icl", "llm_cot"):
        report = _llm_flow(
            config, run_dir, taxonomy, train_instances, eval_instances, client
        )
    elif config.approach == "llm_finetune_export":
        report = _finetune_export_flow(config, run_dir, taxonomy, train_instances)
    elif config.approach == "distill":
        report = _distill_flow(config, run_dir, taxonomy, train_instances, eval_instances)
    else:
        raise ConfigError(f"unknown approach {config.approach!r}")

    _write_json(run_dir / "report.json", report)
    return run_dir


def rerun_from_manifest(
    manifest_path: str | Path, output_dir: str | Path | None = None, client=None
) -> Path:
    """Reproduce a run from its manifest, optionally into a fresh directory."""
    manifest = json.loads(Path(manifest_path).read_text())
    config = ExperimentConfig.from_dict(manifest["config"])
    if output_dir is not None:
        config.output_dir = str(output_dir)
    return run_experiment(config, client=client)


def hamming_divergence(a: Sequence[ActionLabel], b: Sequence[ActionLabel]) -> float:
    if len(a) != len(b):
        raise ConfigError("divergence needs equal-length sequences")
    return sum(1 for x, y in zip(a, b) if x != y) / len(a)


def run_counterfactual(
    instances: Sequence[LtaInstance],
    goal_pairs: Sequence[tuple[str, str]],
    client,
    taxonomy: Taxonomy,
    z: int,
    examples: Sequence[tuple[str, Sequence[ActionLabel], Sequence[ActionLabel]]] = (),
    temperature: float = 0.0,
    fallback: ActionLabel | None = None,
) -> dict:
    """Predict each instance under its inferred goal and an altered goal.

    Returns per-pair records (observed, goal A and its sequence, goal B and
    its sequence, action-level Hamming divergence) plus aggregate stats.
    Identical goals are allowed here as a control: the same bundle is queried
    once and the divergence is zero by construction.
    """
    if len(instances) != len(goal_pairs):
        raise ConfigError("need one goal pair per instance")
    fallback = fallback or ActionLabel(0, 0)
    records = []
    for inst, (goal_a, goal_b) in zip(instances, goal_pairs):
        if goal_a == goal_b:
            control, _ = counterfactual_pair(
                inst.observed, goal_a, goal_a + " ", examples, taxonomy
            )
            bundles = (control, control)
        else:
            bundles = counterfactual_pair(
                inst.observed, goal_a, goal_b, examples, taxonomy
            )
        sequences = []
        for bundle in bundles:
            response = complete(client, bundle, n=1, temperature=temperature)
            candidates, _ = postprocess_candidates(
                response.completions, z, taxonomy, fallback
            )
            sequences.append(candidates.sequences[0])
        divergence = hamming_divergence(sequences[0], sequences[1])
        records.append(
            {
                "instance_id": inst.instance_id,
                "observed": render_sequence(inst.observed, taxonomy),
                "goal_a": goal_a,
                "sequence_a": render_sequence(sequences[0], taxonomy),
                "goal_b": goal_b,
                "sequence_b": render_sequence(sequences[1], taxonomy),
                "divergence": divergence,
            }
        )
    divergences = [record["divergence"] for record in records]
    stats = {
        "n_pairs": len(records),
        "mean_divergence": sum(divergences) / len(divergences) if divergences else 0.0,
        "n_diverged": sum(1 for d in divergences if d > 0),
    }
    return {"records": records, "stats": stats}
