"""Score candidate clarification questions for one ambiguous instance.

Text rewards need no model; the judge-backed pair runs against a scripted
mock so the demo is fully offline.
"""

from __future__ import annotations

from vqaclarify.backend import ScriptedMockBackend
from vqaclarify.dataset import Label, VqaInstance
from vqaclarify.judge_rewards import score_clarification
from vqaclarify.text_rewards import AmbiguityCategory


INSTANCE = VqaInstance(
    id="demo1",
    image_ref="images/family_walk.jpg",
    question="My mother is walking with her families. Which one is my mother?",
    label=Label.NEEDS_CLARIFICATION,
    category=AmbiguityCategory.RELATIONSHIP,
    reference_clarification="Which family member is walking with your mother?",
    reference_answer="The left one.",
)

CANDIDATES = [
    "Which family member is walking with your mother?",
    "My mother is walking with her families, which one is my mother?",  # parrot
    "Tell me more about the picture.",  # not even a question
    "What " + "very " * 50 + "long question is this?",  # over the word budget
]


def text_only_pass() -> None:
    print("text-only components (format / relevance / novelty):")
    for candidate in CANDIDATES:
        breakdown, _ = score_clarification(INSTANCE, candidate, text_only=True)
        shown = candidate if len(candidate) < 60 else candidate[:57] + "..."
        print(
            f"  {breakdown.format:+.1f} {breakdown.relevance:+.1f} "
            f"{breakdown.novelty:+.1f}  total {breakdown.total:+.1f}  {shown!r}"
        )


def full_pass() -> None:
    # Four calls: one paired user simulation, two probe answers, one judge.
    mock = ScriptedMockBackend({
        "user_sim_pair": ["1. My grandmother.\n2. My aunt."],
        "answerer": ["The left one.", "The right one."],
        "judge": ["0.95"],
    })
    breakdown, probe = score_clarification(
        INSTANCE, CANDIDATES[0], user_sim=mock, answerer=mock, judge=mock
    )
    print("\nfull five-component scoring of the best candidate:")
    print(f"  format      {breakdown.format:+.2f}")
    print(f"  relevance   {breakdown.relevance:+.2f}")
    print(f"  resolution  {breakdown.resolution:+.2f}")
    print(f"  novelty     {breakdown.novelty:+.2f}")
    print(f"  groundtruth {breakdown.groundtruth:+.2f}")
    print(f"  total       {breakdown.total:+.2f}")
    print(f"  probe answers differed: {probe.answer_a!r} vs {probe.answer_b!r}")


if __name__ == "__main__":
    text_only_pass()
    full_pass()
