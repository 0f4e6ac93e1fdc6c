"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import json

import pytest

from vqaclarify.backend import ScriptedMockBackend
from vqaclarify.dataset import Label, Provenance, VqaInstance
from vqaclarify.orchestrator import RoleBindings
from vqaclarify.text_rewards import AmbiguityCategory


def make_instance(
    id="q1",
    question="Which one is my mother?",
    label=Label.NEEDS_CLARIFICATION,
    category=AmbiguityCategory.RELATIONSHIP,
    reference_clarification="Which family member are you asking about?",
    **kwargs,
):
    if label is Label.NO_CLARIFICATION_NEEDED:
        kwargs.setdefault("category", None)
        kwargs.setdefault("reference_clarification", None)
    else:
        kwargs.setdefault("category", category)
        kwargs.setdefault("reference_clarification", reference_clarification)
    kwargs.setdefault("image_ref", "images/q1.jpg")
    return VqaInstance(id=id, question=question, label=label, **kwargs)


def make_roles(script, **mock_kwargs) -> tuple[RoleBindings, ScriptedMockBackend]:
    """One shared mock backend bound to all four pipeline roles."""
    mock = ScriptedMockBackend(script, **mock_kwargs)
    roles = RoleBindings(controller=mock, clarifier=mock, answerer=mock, user_sim=mock)
    return roles, mock


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def ambiguous_instance():
    return make_instance()


@pytest.fixture
def plain_instance():
    return make_instance(
        id="q2",
        question="What color is the car?",
        label=Label.NO_CLARIFICATION_NEEDED,
        reference_answer="red",
    )


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion."""
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_a" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            criterion = name.split("_")[1].upper()
            verdict = "PASS" if status == "passed" else "FAIL"
            outcomes[criterion] = (verdict, name)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(outcomes, key=lambda c: int(c[1:])):
        verdict, name = outcomes[criterion]
        terminalreporter.write_line(f"{criterion} {verdict} ({name})")
