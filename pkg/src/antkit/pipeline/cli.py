"""Command-line interface.

Exit codes: 0 ok, 2 config error, 3 data error, 4 endpoint error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigError, DataError, EndpointError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ENDPOINT = 4


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="TOML/JSON experiment config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antkit", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="validate an annotation file against a taxonomy")
    p.add_argument("--taxonomy", required=True, type=Path)
    p.add_argument("--annotations", required=True, type=Path)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--grammar", default="cycle", choices=["cycle", "goal", "branching"])
    p.add_argument("--n-videos", type=int, default=50)
    p.add_argument("--length", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--stop-at", type=int, nargs="*", default=None)
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("train", help="train a local model per the config, no evaluation")
    _add_config_arg(p)

    p = sub.add_parser("predict", help="predict with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--taxonomy", required=True, type=Path)
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--split", default="val")
    p.add_argument("--n-seg", type=int, default=8)
    p.add_argument("--z", type=int, default=20)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--topdown", action="store_true")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("evaluate", help="score a prediction dump")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--taxonomy", required=True, type=Path)
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--split", default="val")
    p.add_argument("--n-seg", type=int, default=8)
    p.add_argument("--z", type=int, default=20)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--verbose", action="store_true",
                   help="include the per-instance breakdown in the report")

    for verb, help_text in (
        ("run", "run any configured experiment end to end"),
        ("goal-infer", "infer goals for eval instances with the LLM"),
        ("cot", "chain-of-thought anticipation run (llm_cot approach)"),
        ("counterfactual", "paired predictions under inferred vs altered goals"),
        ("distill", "teacher/student distillation run"),
        ("export-finetune", "export fine-tuning sample files"),
    ):
        p = sub.add_parser(verb, help=help_text)
        _add_config_arg(p)
        if verb == "counterfactual":
            p.add_argument("--altered-goal", default=None)
        if verb in ("run", "cot"):
            p.add_argument("--strict-repair", action="store_true",
                           help="unconditional nearest-vocabulary mapping, no newline splitting")
        if verb == "distill":
            p.add_argument("--teacher", type=Path, default=None,
                           help="existing teacher checkpoint (skips teacher training)")
            p.add_argument("--student-config", type=Path, default=None,
                           help="JSON file with student model settings")
            p.add_argument("--out", type=Path, default=None,
                           help="also copy the distilled checkpoint here")

    p = sub.add_parser("report", help="aggregate reports across seed runs")
    p.add_argument("--runs", required=True, nargs="+", type=Path)
    p.add_argument("--out", type=Path, default=None)

    return parser


def _cmd_ingest(args) -> int:
    from ..dataset import ingest_annotations
    from ..taxonomy import load_taxonomy

    taxonomy = load_taxonomy(args.taxonomy)
    videos = ingest_annotations(args.annotations, taxonomy)
    n_segments = sum(len(v.segments) for v in videos)
    print(f"ok: {len(videos)} videos, {n_segments} segments, "
          f"{taxonomy.n_verbs} verbs, {taxonomy.n_nouns} nouns")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from ..dataset import write_annotations
    from ..taxonomy import save_taxonomy
    from .synthetic import GRAMMAR_FACTORIES, generate_synthetic

    grammar = GRAMMAR_FACTORIES[args.grammar]()
    videos = generate_synthetic(
        grammar, args.n_videos, args.length, args.seed, args.split, args.stop_at
    )
    args.out.mkdir(parents=True, exist_ok=True)
    taxonomy = grammar.taxonomy()
    save_taxonomy(taxonomy, args.out / "taxonomy.json")
    write_annotations(videos, taxonomy, args.out / f"annotations.{args.split}.jsonl")
    print(f"wrote {len(videos)} videos to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from ..models import train_ngram, train_seq_model
    from .config import load_config
    from .run import _neural_config, load_run_data, _instances, _write_json

    config = load_config(args.config)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    taxonomy, train_videos, _ = load_run_data(config)
    instances = _instances(train_videos, config.n_seg, config.z)
    topdown = config.approach == "top_down_local"
    if config.model.get("kind") == "neural":
        checkpoint = train_seq_model(instances, taxonomy, _neural_config(config, topdown))
        checkpoint.save(run_dir / "model.ckpt")
        print(f"trained neural model on {len(instances)} instances -> {run_dir / 'model.ckpt'}")
    else:
        model = train_ngram(
            instances,
            taxonomy,
            order=int(config.model.get("order", 2)),
            alpha=float(config.model.get("alpha", 0.1)),
        )
        _write_json(run_dir / "model.ngram.json", model.to_dict())
        print(f"trained n-gram on {len(instances)} instances -> {run_dir / 'model.ngram.json'}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    from ..dataset import ingest_annotations, make_lta_instances
    from ..models import Greedy, load_checkpoint, load_model, predict, predict_topdown
    from ..taxonomy import load_taxonomy
    from .run import _dump_predictions

    taxonomy = load_taxonomy(args.taxonomy)
    videos = [
        v for v in ingest_annotations(args.annotations, taxonomy) if v.split == args.split
    ]
    model = load_model(load_checkpoint(args.checkpoint))
    predictions = {}
    for video in videos:
        for inst in make_lta_instances(video, args.n_seg, args.z):
            if args.topdown:
                candidates = predict_topdown(
                    model, inst.observed, inst.goal, args.z, args.k, Greedy(), taxonomy
                )
            else:
                candidates = predict(
                    model, inst.observed, args.z, args.k, Greedy(), taxonomy
                )
            predictions[inst.instance_id] = candidates
    _dump_predictions(args.out, predictions, taxonomy)
    print(f"wrote {len(predictions)} predictions to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from ..dataset import ingest_annotations, make_lta_instances
    from ..errors import InvalidLabel
    from ..metrics import CandidateSet, evaluate_lta
    from ..taxonomy import ActionLabel, load_taxonomy

    taxonomy = load_taxonomy(args.taxonomy)
    videos = [
        v for v in ingest_annotations(args.annotations, taxonomy) if v.split == args.split
    ]
    gts = {}
    for video in videos:
        for inst in make_lta_instances(video, args.n_seg, args.z):
            gts[inst.instance_id] = inst.future_gt
    predictions = {}
    with open(args.predictions, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            sequences = []
            for seq in record["candidates"]:
                labels = []
                for verb_word, noun_word in seq:
                    verb_id = taxonomy.display_verb_id(verb_word)
                    noun_id = taxonomy.display_noun_id(noun_word)
                    if verb_id is None or noun_id is None:
                        raise InvalidLabel(f"unknown words {verb_word!r}/{noun_word!r}")
                    labels.append(ActionLabel(verb_id, noun_id))
                sequences.append(labels)
            predictions[record["instance_id"]] = CandidateSet.from_lists(sequences)
    report = evaluate_lta(predictions, gts)
    data = report.to_dict()
    if args.verbose:
        from ..metrics import CHANNELS, ed_at_z

        data["per_instance"] = {
            instance_id: {
                f"{channel}_ed": ed_at_z(predictions[instance_id], gt, channel)
                for channel in CHANNELS
            }
            for instance_id, gt in sorted(gts.items())
        }
    text = json.dumps(data, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_goal_infer(args) -> int:
    from ..llm import build_goal_prompt, complete, sample_examples
    from ..seeding import derive_seed
    from .config import load_config
    from .run import _instances, _resolve_client, load_run_data

    config = load_config(args.config)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    taxonomy, train_videos, eval_videos = load_run_data(config)
    train_instances = _instances(train_videos, config.n_seg, config.z)
    eval_instances = _instances(eval_videos, config.n_seg, config.z)
    client = _resolve_client(config, None, eval_instances, taxonomy, "goal_icl")
    pool = sample_examples(
        [inst for inst in train_instances if inst.goal],
        int(config.llm["n_examples"]),
        derive_seed(config.seed, "icl-examples"),
    )
    out_path = run_dir / "goals.jsonl"
    with open(out_path, "w", encoding="utf-8") as handle:
        for inst in eval_instances:
            bundle = build_goal_prompt(
                [(ex.observed, ex.goal) for ex in pool], inst.observed, taxonomy
            )
            response = complete(
                client, bundle, n=1, temperature=float(config.llm["goal_temperature"])
            )
            handle.write(
                json.dumps(
                    {"instance_id": inst.instance_id, "goal": response.completions[0].strip()},
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"wrote goals for {len(eval_instances)} instances to {out_path}")
    return EXIT_OK


def _cmd_counterfactual(args) -> int:
    from .config import load_config
    from .run import _instances, _resolve_client, _write_json, load_run_data, run_counterfactual

    config = load_config(args.config)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    taxonomy, train_videos, eval_videos = load_run_data(config)
    eval_instances = _instances(eval_videos, config.n_seg, config.z)
    client = _resolve_client(config, None, eval_instances, taxonomy, "counterfactual")
    goals = sorted({inst.goal for inst in eval_instances if inst.goal})
    pairs = []
    for inst in eval_instances:
        inferred = inst.goal or (goals[0] if goals else "unknown")
        if args.altered_goal:
            altered = args.altered_goal
        elif len(goals) > 1:
            altered = goals[(goals.index(inferred) + 1) % len(goals)]
        else:
            altered = f"not {inferred}"
        pairs.append((inferred, altered))
    result = run_counterfactual(
        eval_instances, pairs, client, taxonomy, config.z,
        temperature=float(config.llm["temperature"]),
    )
    _write_json(run_dir / "counterfactual.json", result)
    print(json.dumps(result["stats"], indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args, approach_override: str | None = None) -> int:
    from .config import load_config
    from .run import run_experiment

    config = load_config(args.config)
    if approach_override:
        config.approach = approach_override
    if getattr(args, "strict_repair", False):
        config.eval["strict_repair"] = True
    run_dir = run_experiment(config)
    report = json.loads((run_dir / "report.json").read_text())
    print(json.dumps(report, indent=2, sort_keys=True))
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _cmd_distill(args) -> int:
    import shutil

    from .config import load_config
    from .run import run_experiment

    config = load_config(args.config)
    config.approach = "distill"
    if args.teacher:
        config.distill = dict(config.distill or {})
        config.distill["teacher_checkpoint"] = str(args.teacher)
    if args.student_config:
        config.distill = dict(config.distill or {})
        config.distill["student"] = json.loads(args.student_config.read_text())
    run_dir = run_experiment(config)
    if args.out:
        shutil.copyfile(run_dir / "distilled.ckpt", args.out)
        print(f"distilled checkpoint copied to {args.out}")
    report = json.loads((run_dir / "report.json").read_text())
    print(json.dumps(report["comparison"]["rows"], indent=2, sort_keys=True))
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    import numpy as np

    reports = []
    for run in args.runs:
        reports.append(json.loads((Path(run) / "report.json").read_text()))
    eds = [r["ed"] for r in reports if "ed" in r]
    if not eds:
        print("no ed reports found in the given runs")
        return EXIT_DATA
    aggregate = {"n_runs": len(eds)}
    for channel in ("verb_ed", "noun_ed", "action_ed"):
        values = [ed[channel] for ed in eds]
        aggregate[channel] = {
            "mean": float(np.mean(values)),
            "spread": float(np.std(values)),
        }
    text = json.dumps(aggregate, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "ingest": _cmd_ingest,
        "synth": _cmd_synth,
        "train": _cmd_train,
        "predict": _cmd_predict,
        "evaluate": _cmd_evaluate,
        "goal-infer": _cmd_goal_infer,
        "counterfactual": _cmd_counterfactual,
        "report": _cmd_report,
        "run": _cmd_run,
        "cot": lambda a: _cmd_run(a, "llm_cot"),
        "distill": _cmd_distill,
        "export-finetune": lambda a: _cmd_run(a, "llm_finetune_export"),
    }
    try:
        code = handlers[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        code = EXIT_ENDPOINT
    return code


if __name__ == "__main__":
    sys.exit(main())
