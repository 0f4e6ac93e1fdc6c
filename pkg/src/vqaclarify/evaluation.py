"""Module-level and system-level evaluation.

Controller quality is a confusion matrix over clarify/answer decisions with
"clarify" as the positive class; clarification quality reuses the
resolution-probe mechanism from training; answer quality is reference-based
VQA accuracy (soft-matched against three or more references, exact
normalized match otherwise).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from . import prompts
from .backend import ChatRequest
from .dataset import Label, VqaInstance
from .judge_rewards import (
    RESOLUTION_DIFFERENT,
    RESOLUTION_SAME,
    normalize_answer,
    parse_similarity_score,
    resolution_reward,
)
from .orchestrator import ControllerAction, EpisodeTrace


def label_to_action(label: Label) -> ControllerAction:
    if label is Label.NEEDS_CLARIFICATION:
        return ControllerAction.CLARIFY
    return ControllerAction.ANSWER


@dataclass(frozen=True)
class ControllerMetrics:
    """Confusion counts and derived rates; clarify is the positive class.

    Every zero-denominator rate is defined as 0.0 rather than NaN so report
    files stay comparable.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_record(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
        }


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> ControllerMetrics:
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return ControllerMetrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=accuracy, precision=precision, recall=recall, f1=f1,
    )


def controller_metrics(
    predicted: Sequence[ControllerAction],
    gold: Sequence[ControllerAction],
) -> ControllerMetrics:
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold lengths differ")
    tp = fp = tn = fn = 0
    for pred, ref in zip(predicted, gold):
        if pred is ControllerAction.CLARIFY and ref is ControllerAction.CLARIFY:
            tp += 1
        elif pred is ControllerAction.CLARIFY and ref is ControllerAction.ANSWER:
            fp += 1
        elif pred is ControllerAction.ANSWER and ref is ControllerAction.ANSWER:
            tn += 1
        else:
            fn += 1
    return metrics_from_counts(tp, fp, tn, fn)


@dataclass(frozen=True)
class ResolutionScoreReport:
    """Per-instance resolution probe scores plus their mean.

    Scores take only the two probe values, so the mean is bounded by them.
    """

    items: tuple[tuple[str, float], ...]
    mean: float

    def to_record(self) -> dict:
        return {"items": [{"id": i, "score": s} for i, s in self.items], "mean": self.mean}


def summarize_resolution_scores(items: Sequence[tuple[str, float]]) -> ResolutionScoreReport:
    allowed = {RESOLUTION_DIFFERENT, RESOLUTION_SAME}
    for item_id, score in items:
        if score not in allowed:
            raise ValueError(f"{item_id}: resolution score {score} outside {sorted(allowed)}")
    mean = sum(s for _, s in items) / len(items) if items else 0.0
    return ResolutionScoreReport(items=tuple(items), mean=mean)


def probe_clarifications(
    pairs: Sequence[tuple[VqaInstance, str]],
    user_sim,
    answerer,
) -> ResolutionScoreReport:
    """Resolution-probe each (instance, clarification) pair; same mechanism
    and constants as the training-time reward."""
    items = []
    for inst, clarification in pairs:
        score, _ = resolution_reward(inst, clarification, user_sim, answerer)
        items.append((inst.id, score))
    return summarize_resolution_scores(items)


SOFT_MATCH_MIN_REFS = 3


@dataclass(frozen=True)
class VqaAccuracyReport:
    per_instance: tuple[float, ...]
    mean: float

    def to_record(self) -> dict:
        return {"per_instance": list(self.per_instance), "mean": self.mean}


def instance_accuracy(answer: str, references: Sequence[str]) -> float:
    """Soft accuracy against >= 3 references (matches/3 capped at 1), exact
    normalized match against fewer."""
    refs = [normalize_answer(r) for r in references if r is not None]
    if not refs:
        raise ValueError("no references to grade against")
    normalized = normalize_answer(answer)
    if len(refs) >= SOFT_MATCH_MIN_REFS:
        matches = sum(1 for r in refs if r == normalized)
        return min(matches / 3.0, 1.0)
    return 1.0 if normalized in refs else 0.0


def vqa_accuracy(
    answers: Sequence[str],
    references: Sequence[Sequence[str]],
) -> VqaAccuracyReport:
    if len(answers) != len(references):
        raise ValueError("answers and references lengths differ")
    per = tuple(instance_accuracy(a, refs) for a, refs in zip(answers, references))
    mean = sum(per) / len(per) if per else 0.0
    return VqaAccuracyReport(per_instance=per, mean=mean)


JUDGE_MATCH_THRESHOLD = 0.5


def judge_answer_match(question: str, answer: str, reference: str, judge) -> bool:
    """Free-form answer equivalence graded by a judge model.

    Exact normalized matches skip the model call; otherwise the judge's
    0-to-1 grade is thresholded at 0.5.
    """
    if normalize_answer(answer) == normalize_answer(reference):
        return True
    request = ChatRequest(
        messages=prompts.answer_match_messages(question, answer, reference),
        role="answer_match",
    )
    return parse_similarity_score(judge.complete(request).text) >= JUDGE_MATCH_THRESHOLD


def traces_to_predictions(
    traces: Sequence[EpisodeTrace],
    instances: dict[str, VqaInstance],
) -> tuple[list[ControllerAction], list[ControllerAction]]:
    """Pair each trace's decision with its instance's gold action."""
    predicted: list[ControllerAction] = []
    gold: list[ControllerAction] = []
    for trace in traces:
        if trace.decision is None:
            continue  # vanilla or failed-before-decision traces carry no call
        inst = instances.get(trace.instance_id)
        if inst is None:
            raise ValueError(f"trace references unknown instance {trace.instance_id!r}")
        predicted.append(trace.decision.action)
        gold.append(label_to_action(inst.label))
    return predicted, gold


def render_metrics_table(
    controller: Optional[ControllerMetrics] = None,
    resolution: Optional[ResolutionScoreReport] = None,
    accuracy: Optional[VqaAccuracyReport] = None,
) -> str:
    """Fixed-width human-readable summary of whichever sections were run."""
    lines = []
    if controller is not None:
        lines.append("controller (clarify = positive)")
        lines.append(f"  tp={controller.tp} fp={controller.fp} "
                     f"tn={controller.tn} fn={controller.fn}")
        lines.append(f"  accuracy   {controller.accuracy:.3f}")
        lines.append(f"  precision  {controller.precision:.3f}")
        lines.append(f"  recall     {controller.recall:.3f}")
        lines.append(f"  f1         {controller.f1:.3f}")
    if resolution is not None:
        lines.append("resolution probes")
        lines.append(f"  items      {len(resolution.items)}")
        lines.append(f"  mean score {resolution.mean:.3f}")
    if accuracy is not None:
        lines.append("vqa accuracy")
        lines.append(f"  items      {len(accuracy.per_instance)}")
        lines.append(f"  mean       {accuracy.mean:.3f}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_metrics_report(
    path_json,
    path_txt,
    controller: Optional[ControllerMetrics] = None,
    resolution: Optional[ResolutionScoreReport] = None,
    accuracy: Optional[VqaAccuracyReport] = None,
) -> None:
    summary = {}
    if controller is not None:
        summary["controller"] = controller.to_record()
    if resolution is not None:
        summary["resolution"] = resolution.to_record()
    if accuracy is not None:
        summary["vqa_accuracy"] = accuracy.to_record()
    with open(path_json, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(path_txt, "w", encoding="utf-8") as fh:
        fh.write(render_metrics_table(controller, resolution, accuracy))
