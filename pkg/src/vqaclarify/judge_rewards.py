"""Model-judged reward signals for clarification questions.

Two signals need a model in the loop: resolution (do two distinct plausible
user responses to the clarification lead to different final answers?) and
ground-truth similarity (how close is the generated clarification to the
annotated reference, graded by a judge model on a 0-to-1 scale). Both are
pure functions of their backends' outputs, so scripted or cached backends
make them fully deterministic.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import orchestrator, prompts
from .backend import BackendError, ChatRequest, ModelBackend
from .dataset import VqaInstance
from .text_rewards import (
    RewardBreakdown,
    RewardWeights,
    format_reward,
    novelty_reward,
    relevance_reward,
)

logger = logging.getLogger(__name__)

RESOLUTION_DIFFERENT = 0.5
RESOLUTION_SAME = -0.3


class JudgeMode(Enum):
    RESOLUTION = "resolution"
    GROUNDTRUTH_SIMILARITY = "groundtruth_similarity"


class RewardUnavailable(RuntimeError):
    """A judge-backed signal could not be computed (backend failure)."""


class JudgeParseError(ValueError):
    """Judge output held no usable score; carries the raw text."""

    def __init__(self, raw: str):
        super().__init__(f"no numeric score in judge output {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class JudgeRequest:
    """What a judge call is about, validated per mode."""

    mode: JudgeMode
    original_question: str
    clarification: str
    image_ref: Optional[str] = None
    reference_clarification: Optional[str] = None

    def __post_init__(self):
        if not self.clarification:
            raise ValueError("empty clarification")
        if self.mode is JudgeMode.GROUNDTRUTH_SIMILARITY and not self.reference_clarification:
            raise ValueError("similarity judging needs a reference clarification")


_TRAILING_PUNCT = ".,!?;:"
_WS = re.compile(r"\s+")


def normalize_answer(text: str) -> str:
    """Canonical form for answer comparison: lowercase, collapsed whitespace,
    trailing sentence punctuation dropped ("10:20." and "10:20" agree)."""
    collapsed = _WS.sub(" ", text.strip().lower())
    return collapsed.rstrip(_TRAILING_PUNCT).strip()


@dataclass(frozen=True)
class ResolutionProbe:
    """The two probe responses and the answers they produced."""

    response_a: str
    response_b: str
    answer_a: str
    answer_b: str
    differed: bool

    @classmethod
    def from_parts(cls, response_a, response_b, answer_a, answer_b) -> "ResolutionProbe":
        differed = normalize_answer(answer_a) != normalize_answer(answer_b)
        return cls(response_a, response_b, answer_a, answer_b, differed)

    def to_record(self) -> dict:
        return {
            "response_a": self.response_a,
            "response_b": self.response_b,
            "answer_a": self.answer_a,
            "answer_b": self.answer_b,
            "differed": self.differed,
        }


def resolution_reward(
    inst: VqaInstance,
    clarification: str,
    user_sim: ModelBackend,
    answerer: ModelBackend,
) -> tuple[float, ResolutionProbe]:
    """+0.5 when two distinct plausible responses change the final answer,
    -0.3 when the answer is insensitive to them (the clarification didn't
    actually gate the answer)."""
    if not clarification or not clarification.strip():
        raise ValueError(f"{inst.id}: cannot probe an empty clarification")
    try:
        response_a, response_b = orchestrator.simulate_user_pair(
            inst, clarification, user_sim
        )
        answer_a = orchestrator.run_answer(inst, answerer, context=(clarification, response_a))
        answer_b = orchestrator.run_answer(inst, answerer, context=(clarification, response_b))
    except BackendError as exc:
        raise RewardUnavailable(f"{inst.id}: resolution probe failed: {exc}") from exc
    probe = ResolutionProbe.from_parts(response_a, response_b, answer_a, answer_b)
    score = RESOLUTION_DIFFERENT if probe.differed else RESOLUTION_SAME
    return score, probe


# First number in the judge's reply, integer or decimal.
_SCORE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?|\.\d+)")


def parse_similarity_score(raw: str) -> float:
    match = _SCORE.search(raw)
    if not match:
        raise JudgeParseError(raw)
    value = float(match.group(1))
    if value < 0.0 or value > 1.0:
        logger.warning("judge score %s out of range, clamping to [0, 1]", value)
        value = min(1.0, max(0.0, value))
    return value


def groundtruth_reward(
    generated: str,
    reference: str,
    judge: ModelBackend,
) -> float:
    """Judge-graded similarity of the generated clarification to the
    reference, clamped to [0, 1]."""
    if not generated or not reference:
        raise ValueError("similarity judging needs both questions")
    request = ChatRequest(
        messages=prompts.judge_similarity_messages(generated, reference),
        role="judge",
    )
    try:
        response = judge.complete(request)
    except BackendError as exc:
        raise RewardUnavailable(f"similarity judge failed: {exc}") from exc
    return parse_similarity_score(response.text)


def score_clarification(
    inst: VqaInstance,
    clarification: str,
    user_sim: Optional[ModelBackend] = None,
    answerer: Optional[ModelBackend] = None,
    judge: Optional[ModelBackend] = None,
    table=None,
    weights: Optional[RewardWeights] = None,
    text_only: bool = False,
) -> tuple[RewardBreakdown, Optional[ResolutionProbe]]:
    """Full five-component scoring of one clarification for one instance.

    Text components always run. With ``text_only`` the judge-backed pair is
    skipped (None in the breakdown); otherwise resolution needs the user-sim
    and answerer backends, and ground-truth similarity runs whenever the
    instance carries a reference clarification and a judge is bound.
    """
    if inst.category is None:
        raise ValueError(f"{inst.id}: scoring needs an ambiguity category")
    fmt = format_reward(clarification)
    rel = relevance_reward(clarification, inst.category, table)
    nov = novelty_reward(clarification, inst.question)

    resolution = None
    groundtruth = None
    probe = None
    if not text_only:
        if user_sim is None or answerer is None:
            raise ValueError("resolution scoring needs user_sim and answerer backends")
        resolution, probe = resolution_reward(inst, clarification, user_sim, answerer)
        if inst.reference_clarification:
            if judge is None:
                raise ValueError("similarity scoring needs a judge backend")
            groundtruth = groundtruth_reward(
                clarification, inst.reference_clarification, judge
            )

    breakdown = RewardBreakdown.build(
        format=fmt,
        relevance=rel,
        novelty=nov,
        resolution=resolution,
        groundtruth=groundtruth,
        weights=weights,
    )
    return breakdown, probe
