"""Clarify-or-answer episode orchestration.

An episode runs at most four model calls: the controller decides whether the
question is answerable as-is, an optional single clarification turn asks for
the missing fact, a simulated user supplies it, and the answerer produces
the final answer. The structural guarantee is at most one clarification per
episode; the vanilla baseline skips the controller entirely and issues one
free-form call.
"""

from __future__ import annotations

import logging
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import prompts
from .backend import BackendError, ChatRequest, ModelBackend
from .dataset import VqaInstance

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1


class ControllerAction(Enum):
    ANSWER = "answer"
    CLARIFY = "clarify"


class EpisodeMode(Enum):
    COA = "coa"
    VANILLA = "vanilla"


class ControllerParseError(ValueError):
    """Controller emitted something other than yes/no."""

    def __init__(self, raw: str):
        super().__init__(f"controller returned {raw!r}, expected yes or no")
        self.raw = raw


class EmptyClarificationError(ValueError):
    """Clarifier returned nothing usable."""


class ProbeParseError(ValueError):
    """Pair-probe response did not contain two answers."""

    def __init__(self, raw: str):
        super().__init__(f"could not extract two probe responses from {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class ControllerDecision:
    action: ControllerAction
    raw_token: str


def parse_controller_token(raw: str) -> ControllerDecision:
    """Map the controller's output to an action.

    Takes the first whitespace token, strips punctuation and backticks, and
    lowercases, so "No." and "`yes`" parse cleanly. Anything that is not
    yes/no raises.
    """
    token = ""
    stripped = raw.strip()
    if stripped:
        token = stripped.split()[0].strip(string.punctuation + "`").lower()
    if token == "yes":
        return ControllerDecision(ControllerAction.CLARIFY, raw_token=raw)
    if token == "no":
        return ControllerDecision(ControllerAction.ANSWER, raw_token=raw)
    raise ControllerParseError(raw)


@dataclass
class RoleBindings:
    """Which backend serves each pipeline role."""

    controller: ModelBackend
    clarifier: ModelBackend
    answerer: ModelBackend
    user_sim: ModelBackend

    def ids(self) -> dict[str, str]:
        return {
            "controller": self.controller.id,
            "clarifier": self.clarifier.id,
            "answerer": self.answerer.id,
            "user_sim": self.user_sim.id,
        }


@dataclass(frozen=True)
class StageError:
    stage: str
    message: str


@dataclass
class EpisodeTrace:
    """Everything one episode did, in a serializable record."""

    instance_id: str
    mode: EpisodeMode
    final_answer: str = ""
    decision: Optional[ControllerDecision] = None
    clarification: Optional[str] = None
    user_response: Optional[str] = None
    backend_ids: dict[str, str] = field(default_factory=dict)
    error: Optional[StageError] = None
    timing: dict[str, float] = field(default_factory=dict)
    schema_version: int = TRACE_SCHEMA_VERSION

    def asked_clarification(self) -> bool:
        return self.clarification is not None

    def to_record(self, include_timing: bool = False) -> dict:
        record = {
            "schema_version": self.schema_version,
            "instance_id": self.instance_id,
            "mode": self.mode.value,
            "decision": None if self.decision is None else {
                "action": self.decision.action.value,
                "raw_token": self.decision.raw_token,
            },
            "clarification": self.clarification,
            "user_response": self.user_response,
            "final_answer": self.final_answer,
            "backend_ids": dict(sorted(self.backend_ids.items())),
            "error": None if self.error is None else {
                "stage": self.error.stage,
                "message": self.error.message,
            },
        }
        if include_timing:
            record["timing"] = {k: round(v, 6) for k, v in sorted(self.timing.items())}
        return record


def run_controller(
    inst: VqaInstance,
    backend: ModelBackend,
    fallback: Optional[ControllerAction] = ControllerAction.ANSWER,
) -> ControllerDecision:
    """Ask the yes/no ambiguity question. Unparseable output falls back to
    answering directly (logged); pass ``fallback=None`` to raise instead."""
    request = ChatRequest(
        messages=prompts.controller_messages(inst.question, inst.image_ref),
        role="controller",
    )
    response = backend.complete(request)
    try:
        return parse_controller_token(response.text)
    except ControllerParseError:
        if fallback is None:
            raise
        logger.warning(
            "%s: controller output %r unparseable, falling back to %s",
            inst.id, response.text, fallback.value,
        )
        return ControllerDecision(fallback, raw_token=response.text)


_LABEL_PREFIX = re.compile(
    r"^(?:clarification question|clarification|question|cq)\s*:\s*",
    re.IGNORECASE,
)


def run_clarify(inst: VqaInstance, backend: ModelBackend) -> str:
    """Generate the single clarification question.

    Output is reduced to its first non-empty line with any leading
    "Clarification:"-style label removed; an empty result raises.
    """
    request = ChatRequest(
        messages=prompts.clarifier_messages(inst.question, inst.image_ref),
        role="clarifier",
    )
    response = backend.complete(request)
    for line in response.text.splitlines():
        line = _LABEL_PREFIX.sub("", line.strip()).strip()
        if line:
            return line
    raise EmptyClarificationError(f"{inst.id}: clarifier produced no text")


def simulate_user(inst: VqaInstance, clarification: str, backend: ModelBackend) -> str:
    """One plausible user response to the clarification question."""
    request = ChatRequest(
        messages=prompts.user_sim_messages(inst.question, clarification, inst.image_ref),
        role="user_sim",
    )
    return backend.complete(request).text.strip()


_PAIR_LINE = re.compile(r"^\s*[12][.):-]\s*(.+)$")


def simulate_user_pair(
    inst: VqaInstance, clarification: str, backend: ModelBackend
) -> tuple[str, str]:
    """Two distinct plausible user responses, for resolution probing."""
    request = ChatRequest(
        messages=prompts.user_sim_pair_messages(inst.question, clarification, inst.image_ref),
        role="user_sim_pair",
    )
    raw = backend.complete(request).text
    numbered = [m.group(1).strip() for m in map(_PAIR_LINE.match, raw.splitlines()) if m]
    if len(numbered) >= 2:
        return numbered[0], numbered[1]
    # Tolerate unnumbered output: fall back to the first two non-empty lines.
    plain = [line.strip() for line in raw.splitlines() if line.strip()]
    if len(plain) >= 2:
        return plain[0], plain[1]
    raise ProbeParseError(raw)


def run_answer(
    inst: VqaInstance,
    backend: ModelBackend,
    context: Optional[tuple[str, str]] = None,
) -> str:
    """Final answer, optionally conditioned on (clarification, user response)."""
    clarification, response = context if context else (None, None)
    request = ChatRequest(
        messages=prompts.answer_messages(
            inst.question, inst.image_ref, clarification=clarification, response=response
        ),
        role="answerer",
    )
    return backend.complete(request).text.strip()


def run_vanilla(inst: VqaInstance, backend: ModelBackend) -> str:
    """Single-call baseline: the model answers or asks on its own judgment."""
    request = ChatRequest(
        messages=prompts.vanilla_messages(inst.question, inst.image_ref),
        role="vanilla",
    )
    return backend.complete(request).text.strip()


def run_episode(
    inst: VqaInstance,
    roles: RoleBindings,
    mode: EpisodeMode = EpisodeMode.COA,
    controller_fallback: Optional[ControllerAction] = ControllerAction.ANSWER,
    clock=time.perf_counter,
) -> EpisodeTrace:
    """Run one episode; backend failures are recorded on the trace, not raised.

    CoA invokes the answerer exactly once and asks at most one clarification.
    """
    trace = EpisodeTrace(instance_id=inst.id, mode=mode, backend_ids=roles.ids())
    if mode is EpisodeMode.VANILLA:
        trace.backend_ids = {"vanilla": roles.answerer.id}
        started = clock()
        try:
            trace.final_answer = run_vanilla(inst, roles.answerer)
        except (BackendError, ValueError) as exc:
            trace.error = StageError(stage="vanilla", message=str(exc))
        trace.timing["vanilla"] = clock() - started
        return trace

    stage = "controller"
    started = clock()
    try:
        trace.decision = run_controller(inst, roles.controller, fallback=controller_fallback)
        trace.timing[stage] = clock() - started

        context = None
        if trace.decision.action is ControllerAction.CLARIFY:
            stage = "clarify"
            started = clock()
            trace.clarification = run_clarify(inst, roles.clarifier)
            trace.timing[stage] = clock() - started

            stage = "user_sim"
            started = clock()
            trace.user_response = simulate_user(inst, trace.clarification, roles.user_sim)
            trace.timing[stage] = clock() - started
            context = (trace.clarification, trace.user_response)

        stage = "answer"
        started = clock()
        trace.final_answer = run_answer(inst, roles.answerer, context=context)
        trace.timing[stage] = clock() - started
    except (BackendError, ValueError) as exc:
        trace.timing[stage] = clock() - started
        trace.error = StageError(stage=stage, message=str(exc))
    return trace


def run_batch(
    instances: Sequence[VqaInstance],
    roles: RoleBindings,
    mode: EpisodeMode = EpisodeMode.COA,
    max_workers: int = 1,
    controller_fallback: Optional[ControllerAction] = ControllerAction.ANSWER,
) -> list[EpisodeTrace]:
    """Run episodes for every instance; output is ordered by instance id.

    ``max_workers`` bounds in-flight episodes. Keep it at 1 for scripted
    fixtures with ordered queues; their consumption order races otherwise.
    """
    if max_workers <= 1:
        traces = [
            run_episode(inst, roles, mode, controller_fallback=controller_fallback)
            for inst in instances
        ]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            traces = list(
                pool.map(
                    lambda inst: run_episode(
                        inst, roles, mode, controller_fallback=controller_fallback
                    ),
                    instances,
                )
            )
    return sorted(traces, key=lambda t: t.instance_id)
