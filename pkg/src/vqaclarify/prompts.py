"""Prompt assets for every model role in the pipeline.

Each role gets a system prompt constant plus a builder that assembles the
full message list for one call. Prompt text is part of the engine's contract
with scripted fixtures and caches, so any edit must bump PROMPTS_VERSION.
"""

from __future__ import annotations

from typing import Optional

from .backend import ChatMessage

PROMPTS_VERSION = "1"

CONTROLLER_SYSTEM = (
    "You are a visual Q&A ambiguity checker. Given one image and one question "
    "about that image, decide if the question needs further clarification "
    "before it can be reliably answered from pixels. Mark `yes` if answering "
    "depends on off-image knowledge. Otherwise, mark `no`.\n"
    "\n"
    "Output only a single token: `yes` or `no`."
)

CLARIFIER_SYSTEM = (
    "You write exactly one clarifying question. Do not answer the original "
    "question.\n"
    "\n"
    "Given an image and an original question, ask for the single missing fact "
    "that would determine the answer.\n"
    "\n"
    "Input: (1) image, (2) original question.\n"
    "Output: exactly one short clarification question without any prefix."
)

VANILLA_SYSTEM = (
    "You are a visual assistant. You answer the question directly whenever "
    "the image provides enough information. Only ask a clarification question "
    "if the answer would differ depending on missing information.\n"
    "\n"
    "Input: (1) image, (2) original question.\n"
    "Output: final answer or a single short clarification question"
)

USER_SIM_SYSTEM = (
    "You are the person who asked the original visual question. Answer the "
    "clarification question briefly and plausibly, consistent with the image "
    "and your situation. Reply with only the answer."
)

USER_SIM_PAIR_SYSTEM = (
    "You are simulating the person who asked the original visual question. "
    "Give two distinct plausible answers to the clarification question, such "
    "that the two answers describe different situations. Reply with exactly "
    "two lines:\n"
    "1. <first answer>\n"
    "2. <second answer>"
)

ANSWER_SYSTEM = (
    "You are a visual assistant. Answer the question using the image. Reply "
    "with only the final answer."
)

ANSWER_WITH_CONTEXT_SYSTEM = (
    "You are a visual assistant. Answer the original question using the image "
    "and the extra context provided by the clarification exchange. Reply with "
    "only the final answer."
)

JUDGE_SIMILARITY_SYSTEM = (
    "You grade how closely a generated clarification question matches a "
    "reference clarification question. Score 1.0 when both ask for the same "
    "missing fact, 0.0 when they are unrelated, intermediate values for "
    "partial overlap. Reply with a single decimal number between 0 and 1 and "
    "nothing else."
)

ANSWER_MATCH_SYSTEM = (
    "You grade whether a candidate answer to a visual question means the "
    "same thing as the reference answer. Score 1.0 for equivalent answers, "
    "0.0 for contradictory or unrelated ones. Reply with a single decimal "
    "number between 0 and 1 and nothing else."
)


def controller_messages(question: str, image_ref: Optional[str]) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=CONTROLLER_SYSTEM),
        ChatMessage(role="user", content=f"Question: {question}", image_ref=image_ref),
    )


def clarifier_messages(question: str, image_ref: Optional[str]) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=CLARIFIER_SYSTEM),
        ChatMessage(role="user", content=f"Question: {question}", image_ref=image_ref),
    )


def vanilla_messages(question: str, image_ref: Optional[str]) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=VANILLA_SYSTEM),
        ChatMessage(role="user", content=f"Question: {question}", image_ref=image_ref),
    )


def user_sim_messages(
    question: str, clarification: str, image_ref: Optional[str]
) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=USER_SIM_SYSTEM),
        ChatMessage(
            role="user",
            content=(
                f"Original question: {question}\n"
                f"Clarification question: {clarification}"
            ),
            image_ref=image_ref,
        ),
    )


def user_sim_pair_messages(
    question: str, clarification: str, image_ref: Optional[str]
) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=USER_SIM_PAIR_SYSTEM),
        ChatMessage(
            role="user",
            content=(
                f"Original question: {question}\n"
                f"Clarification question: {clarification}"
            ),
            image_ref=image_ref,
        ),
    )


def answer_messages(
    question: str,
    image_ref: Optional[str],
    clarification: Optional[str] = None,
    response: Optional[str] = None,
) -> tuple[ChatMessage, ...]:
    """Direct answering, or answering with the clarification exchange inlined."""
    if clarification is None:
        return (
            ChatMessage(role="system", content=ANSWER_SYSTEM),
            ChatMessage(role="user", content=f"Question: {question}", image_ref=image_ref),
        )
    return (
        ChatMessage(role="system", content=ANSWER_WITH_CONTEXT_SYSTEM),
        ChatMessage(
            role="user",
            content=(
                f"Question: {question}\n"
                f"Clarification question: {clarification}\n"
                f"Clarification response: {response or ''}"
            ),
            image_ref=image_ref,
        ),
    )


def judge_similarity_messages(generated: str, reference: str) -> tuple[ChatMessage, ...]:
    # Text-only on purpose: the rubric compares two questions, not the image.
    return (
        ChatMessage(role="system", content=JUDGE_SIMILARITY_SYSTEM),
        ChatMessage(
            role="user",
            content=f"Reference: {reference}\nGenerated: {generated}",
        ),
    )


def answer_match_messages(question: str, candidate: str, reference: str) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(role="system", content=ANSWER_MATCH_SYSTEM),
        ChatMessage(
            role="user",
            content=(
                f"Question: {question}\n"
                f"Reference answer: {reference}\n"
                f"Candidate answer: {candidate}"
            ),
        ),
    )
