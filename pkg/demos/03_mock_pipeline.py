"""Run clarify-or-answer episodes against scripted mock backends.

Shows the clarify path, the direct-answer path, and the vanilla baseline;
every model call is served from the script, so output is deterministic.
"""

from __future__ import annotations

import json

from vqaclarify.backend import ScriptedMockBackend
from vqaclarify.dataset import Label, VqaInstance
from vqaclarify.orchestrator import EpisodeMode, RoleBindings, run_episode
from vqaclarify.text_rewards import AmbiguityCategory

AMBIGUOUS = VqaInstance(
    id="walk01",
    image_ref="images/family_walk.jpg",
    question="My mother is walking with her families. Which one is my mother?",
    label=Label.NEEDS_CLARIFICATION,
    category=AmbiguityCategory.RELATIONSHIP,
    reference_clarification="Which family member is walking with your mother?",
    reference_answer="The left one.",
)

PLAIN = VqaInstance(
    id="car01",
    image_ref="images/street.jpg",
    question="What color is the car?",
    label=Label.NO_CLARIFICATION_NEEDED,
    reference_answer="red",
)


def bindings(script: dict[str, list[str]]) -> RoleBindings:
    mock = ScriptedMockBackend(script)
    return RoleBindings(controller=mock, clarifier=mock, answerer=mock, user_sim=mock)


def show(title: str, trace) -> None:
    print(f"== {title} ==")
    print(json.dumps(trace.to_record(), indent=2, sort_keys=True))
    print()


def main() -> None:
    clarify_roles = bindings({
        "controller": ["yes"],
        "clarifier": ["Which family member is walking with your mother?"],
        "user_sim": ["My grandmother."],
        "answerer": ["The left one."],
    })
    show("clarify path", run_episode(AMBIGUOUS, clarify_roles))

    direct_roles = bindings({"controller": ["no"], "answerer": ["red"]})
    show("direct path", run_episode(PLAIN, direct_roles))

    vanilla_roles = bindings({"vanilla": ["the one on the left, maybe"]})
    show("vanilla baseline (no controller, no clarifier)",
         run_episode(AMBIGUOUS, vanilla_roles, mode=EpisodeMode.VANILLA))


if __name__ == "__main__":
    main()
