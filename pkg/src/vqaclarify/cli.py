"""Command-line interface.

Subcommands: score (reward a file of clarifications), train-toy (run the
toy GRPO trainer), run (orchestrate episodes over a dataset), contrast
(build contrast variants), eval (metrics from traces), split (partition a
dataset). Exit codes: 0 success, 1 usage, 2 data or config problem, 3
backend failure. All outputs are deterministic: keys sorted, no timestamps
unless timing is explicitly requested.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import evaluation, judge_rewards, orchestrator
from .backend import (
    BackendError,
    CachedBackend,
    GenerationLimits,
    HttpChatBackend,
    HttpConfig,
    ModelBackend,
    ResponseCache,
    mock_from_fixture,
)
from .dataset import (
    ContrastError,
    SchemaError,
    SplitSpec,
    VqaInstance,
    augment_with_contrast,
    load_annotations,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .grpo import ToyPolicy, TrainConfig, train_toy
from .judge_rewards import RewardUnavailable, score_clarification
from .orchestrator import EpisodeMode, EpisodeTrace, RoleBindings, run_batch
from .text_rewards import (
    AmbiguityCategory,
    KeywordTable,
    KeywordTableError,
    RewardWeights,
    score_text,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

PIPELINE_ROLES = ("controller", "clarifier", "answerer", "user_sim")
JUDGE_ROLES = ("user_sim", "answerer", "judge")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here reserves 2 for
    # data errors, so usage failures exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class ConfigFileError(ValueError):
    pass


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigFileError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigFileError(f"{path}: config must be a JSON object")
    return raw


def _dump_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def _read_jsonl(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", record_index=index) from exc
    return records


def _build_backend(spec: dict, cache: Optional[ResponseCache], role: str) -> ModelBackend:
    kind = spec.get("kind")
    if kind == "mock":
        fixture = spec.get("fixture")
        if not fixture:
            raise ConfigFileError(f"backend for {role!r}: mock needs a 'fixture' path")
        backend: ModelBackend = mock_from_fixture(fixture)
    elif kind == "http":
        config = HttpConfig(
            base_url=spec.get("base_url", ""),
            model=spec.get("model", ""),
            api_key=spec.get("api_key"),
            timeout_s=float(spec.get("timeout_s", 60.0)),
            max_attempts=int(spec.get("max_attempts", 3)),
            max_in_flight=int(spec.get("max_in_flight", 8)),
        )
        limits = GenerationLimits(
            max_prompt_tokens=int(spec.get("max_prompt_tokens", 1000)),
            max_completion_tokens=int(spec.get("max_completion_tokens", 768)),
        )
        backend = HttpChatBackend(config, limits=limits)
    else:
        raise ConfigFileError(f"backend for {role!r}: unknown kind {kind!r}")
    if cache is not None:
        backend = CachedBackend(backend, cache, namespace=role)
    return backend


def _bind_roles(config: dict, roles) -> dict[str, ModelBackend]:
    """Build one backend per role. A 'default' entry covers unbound roles;
    identical specs share one instance so scripted queues stay coherent."""
    backend_specs = config.get("backends") or {}
    cache_path = config.get("cache_path")
    cache = ResponseCache(cache_path) if cache_path else None
    instances: dict[str, ModelBackend] = {}
    bound: dict[str, ModelBackend] = {}
    missing = []
    for role in roles:
        spec = backend_specs.get(role) or backend_specs.get("default")
        if not spec:
            missing.append(role)
            continue
        key = json.dumps(spec, sort_keys=True)
        if key not in instances:
            # Cache namespace "shared" keeps one entry per request across the
            # roles a shared backend serves; role tags already separate them.
            instances[key] = _build_backend(spec, cache, role="shared")
        bound[role] = instances[key]
    if missing:
        raise ConfigFileError(
            "no backend bound for role(s): " + ", ".join(sorted(missing))
        )
    return bound


def _keyword_table(config: dict) -> Optional[KeywordTable]:
    path = config.get("keywords_file")
    return KeywordTable.from_file(path) if path else None


def _weights(config: dict) -> Optional[RewardWeights]:
    raw = config.get("weights")
    return RewardWeights.from_mapping(raw) if raw else None


def _resolved_config(args: argparse.Namespace, config: dict, extra: dict) -> dict:
    resolved = {"command": args.command, "config": config}
    resolved.update(extra)
    return resolved


# ---------------------------------------------------------------- commands


def cmd_score(args) -> int:
    config = _load_config(args.config)
    table = _keyword_table(config)
    weights = _weights(config)
    dataset = {inst.id: inst for inst in load_dataset(args.dataset)}
    candidates = _read_jsonl(args.clarifications)

    backends: dict[str, ModelBackend] = {}
    if not args.text_only:
        backends = _bind_roles(config, JUDGE_ROLES)

    os.makedirs(args.out, exist_ok=True)
    rows = []
    component_sums: dict[str, float] = {}
    component_counts: dict[str, int] = {}
    for index, record in enumerate(candidates):
        inst_id = record.get("id")
        clarification = record.get("clarification")
        if not inst_id or clarification is None:
            raise SchemaError("needs 'id' and 'clarification'", record_index=index)
        inst = dataset.get(inst_id)
        if inst is None:
            raise SchemaError(f"unknown instance id {inst_id!r}", record_index=index)
        if args.text_only:
            if inst.category is None:
                raise SchemaError(
                    f"{inst_id}: instance has no category to score relevance against",
                    record_index=index,
                )
            breakdown = score_text(
                clarification, inst.question, inst.category, table=table, weights=weights
            )
            probe = None
        else:
            breakdown, probe = score_clarification(
                inst,
                clarification,
                user_sim=backends["user_sim"],
                answerer=backends["answerer"],
                judge=backends["judge"],
                table=table,
                weights=weights,
            )
        row = {"id": inst_id, "clarification": clarification}
        row.update(breakdown.as_dict())
        row["probe"] = probe.to_record() if probe else None
        rows.append(row)
        for name, value in breakdown.as_dict().items():
            if value is None:
                continue
            component_sums[name] = component_sums.get(name, 0.0) + value
            component_counts[name] = component_counts.get(name, 0) + 1

    _write_jsonl(rows, os.path.join(args.out, "rewards.jsonl"))
    summary = {
        "count": len(rows),
        "means": {
            name: component_sums[name] / component_counts[name]
            for name in sorted(component_sums)
        },
    }
    _dump_json(summary, os.path.join(args.out, "summary.json"))
    _dump_json(
        _resolved_config(args, config, {"text_only": args.text_only}),
        os.path.join(args.out, "resolved_config.json"),
    )
    print(f"scored {len(rows)} clarification(s) -> {args.out}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    config = _load_config(args.config)
    templates = config.get("templates")
    if not templates:
        raise ConfigFileError("train-toy needs a 'templates' list in the config")
    question = config.get("original_question", "")
    category_name = config.get("category")
    if not category_name:
        raise ConfigFileError("train-toy needs a 'category' in the config")
    try:
        category = AmbiguityCategory(category_name)
    except ValueError:
        raise ConfigFileError(f"unknown category {category_name!r}") from None
    table = _keyword_table(config)
    weights = _weights(config)

    train_raw = dict(config.get("train") or {})
    for flag in ("steps", "seed", "group_size"):
        value = getattr(args, flag)
        if value is not None:
            train_raw[flag] = value
    if args.lr is not None:
        train_raw["learning_rate"] = args.lr
    if args.kl_beta is not None:
        train_raw["kl_beta"] = args.kl_beta
    try:
        train_config = TrainConfig(**train_raw)
    except TypeError as exc:
        raise ConfigFileError(f"bad train config: {exc}") from None

    policy = ToyPolicy.uniform(templates)

    def reward_fn(text: str) -> float:
        return score_text(text, question, category, table=table, weights=weights).total

    trace = train_toy(policy, reward_fn, train_config)

    os.makedirs(args.out, exist_ok=True)
    trace.write_jsonl(os.path.join(args.out, "trace.jsonl"))
    probabilities = policy.probabilities()
    _dump_json(
        {
            "templates": list(policy.candidate_space),
            "logits": [float(x) for x in policy.logits],
            "probabilities": [float(p) for p in probabilities],
            "candidate_rewards": trace.candidate_rewards,
        },
        os.path.join(args.out, "policy.json"),
    )
    _dump_json(
        _resolved_config(args, config, {"train": train_config.__dict__}),
        os.path.join(args.out, "resolved_config.json"),
    )
    best = int(np.argmax(probabilities))
    print(
        f"trained {train_config.steps} steps; "
        f"best template p={probabilities[best]:.3f}: {policy.candidate_space[best]!r}"
    )
    return EXIT_OK


def _load_traces(path) -> list[EpisodeTrace]:
    traces = []
    for index, record in enumerate(_read_jsonl(path)):
        try:
            decision = record.get("decision")
            traces.append(
                EpisodeTrace(
                    instance_id=record["instance_id"],
                    mode=EpisodeMode(record["mode"]),
                    final_answer=record.get("final_answer", ""),
                    decision=None if decision is None else orchestrator.ControllerDecision(
                        action=orchestrator.ControllerAction(decision["action"]),
                        raw_token=decision.get("raw_token", ""),
                    ),
                    clarification=record.get("clarification"),
                    user_response=record.get("user_response"),
                    backend_ids=record.get("backend_ids", {}),
                    error=None if record.get("error") is None else orchestrator.StageError(
                        stage=record["error"]["stage"],
                        message=record["error"]["message"],
                    ),
                )
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad trace record: {exc}", record_index=index) from None
    return traces


def cmd_run(args) -> int:
    config = _load_config(args.config)
    instances = load_dataset(args.dataset)
    if args.limit is not None:
        instances = instances[: args.limit]
    mode = EpisodeMode(args.mode)
    backends = _bind_roles(config, PIPELINE_ROLES)
    roles = RoleBindings(
        controller=backends["controller"],
        clarifier=backends["clarifier"],
        answerer=backends["answerer"],
        user_sim=backends["user_sim"],
    )

    os.makedirs(args.out, exist_ok=True)
    traces_path = os.path.join(args.out, "traces.jsonl")
    existing: list[EpisodeTrace] = []
    if args.resume and os.path.exists(traces_path):
        existing = _load_traces(traces_path)
        done = {t.instance_id for t in existing}
        instances = [inst for inst in instances if inst.id not in done]

    parallelism = int(config.get("parallelism", 1))
    new_traces = run_batch(instances, roles, mode=mode, max_workers=parallelism)
    merged = sorted(existing + new_traces, key=lambda t: t.instance_id)
    _write_jsonl((t.to_record(include_timing=args.timing) for t in merged), traces_path)
    _dump_json(
        _resolved_config(args, config, {"mode": mode.value, "timing": args.timing}),
        os.path.join(args.out, "resolved_config.json"),
    )
    failures = sum(1 for t in merged if t.error is not None)
    print(
        f"ran {len(new_traces)} episode(s) ({len(existing)} resumed, "
        f"{failures} failed) -> {traces_path}"
    )
    return EXIT_OK


def cmd_contrast(args) -> int:
    instances = load_dataset(args.dataset)
    annotations = load_annotations(args.annotations)
    augmented = augment_with_contrast(instances, annotations)
    save_dataset(augmented, args.out)
    added = len(augmented) - len(instances)
    print(f"wrote {len(augmented)} instance(s) ({added} variants) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    instances = {inst.id: inst for inst in load_dataset(args.dataset)}
    traces = _load_traces(args.traces)

    predicted, gold = evaluation.traces_to_predictions(traces, instances)
    controller = evaluation.controller_metrics(predicted, gold) if predicted else None

    graded = []  # (question, answer, reference)
    for trace in traces:
        inst = instances.get(trace.instance_id)
        if inst is None:
            raise SchemaError(f"trace references unknown instance {trace.instance_id!r}")
        if inst.reference_answer and trace.error is None:
            graded.append((inst.question, trace.final_answer, inst.reference_answer))
    accuracy = None
    if graded:
        if args.judge_match:
            judge = _bind_roles(config, ("judge",))["judge"]
            per = tuple(
                1.0 if evaluation.judge_answer_match(q, a, ref, judge) else 0.0
                for q, a, ref in graded
            )
            accuracy = evaluation.VqaAccuracyReport(
                per_instance=per, mean=sum(per) / len(per)
            )
        else:
            accuracy = evaluation.vqa_accuracy(
                [a for _, a, _ in graded], [[ref] for _, _, ref in graded]
            )

    resolution = None
    if args.resolution:
        backends = _bind_roles(config, ("user_sim", "answerer"))
        pairs = [
            (instances[t.instance_id], t.clarification)
            for t in traces
            if t.clarification and t.instance_id in instances
        ]
        resolution = evaluation.probe_clarifications(
            pairs, backends["user_sim"], backends["answerer"]
        )

    os.makedirs(args.out, exist_ok=True)
    evaluation.write_metrics_report(
        os.path.join(args.out, "metrics.json"),
        os.path.join(args.out, "metrics.txt"),
        controller=controller,
        resolution=resolution,
        accuracy=accuracy,
    )
    print(evaluation.render_metrics_table(controller, resolution, accuracy), end="")
    return EXIT_OK


def cmd_split(args) -> int:
    instances = load_dataset(args.dataset)
    spec = SplitSpec(train=args.train, val=args.val, test=args.test, seed=args.seed)
    splits = split_dataset(instances, spec)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(splits.train, os.path.join(args.out, "train.jsonl"))
    save_dataset(splits.val, os.path.join(args.out, "val.jsonl"))
    save_dataset(splits.test, os.path.join(args.out, "test.jsonl"))
    _dump_json(
        {
            "sizes": splits.sizes(),
            "ratios": {"train": spec.train, "val": spec.val, "test": spec.test},
            "seed": spec.seed,
            "assignment": dict(sorted(splits.assignment.items())),
        },
        os.path.join(args.out, "split.json"),
    )
    sizes = splits.sizes()
    print(f"split {len(instances)} -> train={sizes['train']} "
          f"val={sizes['val']} test={sizes['test']}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="vqaclarify",
        description="Clarify-or-answer orchestration, clarification rewards, "
                    "and dataset tooling for context-dependent VQA.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score clarification questions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--clarifications", required=True,
                   help="JSONL of {id, clarification}")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--text-only", action="store_true",
                   help="skip the judge-backed components")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train-toy", help="train the toy softmax policy")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON with templates, category, train params")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--kl-beta", dest="kl_beta", type=float)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("run", help="run clarify-or-answer episodes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", required=True, help="backend bindings")
    p.add_argument("--mode", choices=[m.value for m in EpisodeMode], default="coa")
    p.add_argument("--limit", type=int)
    p.add_argument("--resume", action="store_true",
                   help="skip instances already present in the output")
    p.add_argument("--timing", action="store_true",
                   help="include per-stage timing in traces (non-reproducible)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("contrast", help="build contrast variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--annotations", required=True,
                   help="JSONL of per-id context strings")
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=cmd_contrast)

    p = sub.add_parser("eval", help="compute metrics from episode traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--resolution", action="store_true",
                   help="probe logged clarifications (needs backends)")
    p.add_argument("--judge-match", dest="judge_match", action="store_true",
                   help="grade free-form answers with the judge backend")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("split", help="partition a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=float, default=0.70)
    p.add_argument("--val", type=float, default=0.15)
    p.add_argument("--test", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ContrastError, KeywordTableError, ConfigFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BackendError, RewardUnavailable) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
