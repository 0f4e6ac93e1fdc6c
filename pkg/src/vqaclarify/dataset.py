"""Dataset schema, loading, contrast construction, and splitting.

Instances live in JSONL files with an explicit schema_version. Ambiguous
items carry a category and a reference clarification; contrast variants are
derived from them by splicing disambiguating or irrelevant context into the
question and flipping (or keeping) the label accordingly. Splits are grouped
so every variant lands in the same partition as its source.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .text_rewards import AmbiguityCategory

DATASET_SCHEMA_VERSION = 1


class Label(Enum):
    NEEDS_CLARIFICATION = "needs_clarification"
    NO_CLARIFICATION_NEEDED = "no_clarification_needed"


class Provenance(Enum):
    ORIGINAL = "original"
    CONTEXT_COMPLETED = "context_completed"
    IRRELEVANT_INJECTED = "irrelevant_injected"


class SchemaError(ValueError):
    """A record that violates the dataset contract."""

    def __init__(self, message: str, record_index: Optional[int] = None,
                 field: Optional[str] = None):
        prefix = ""
        if record_index is not None:
            prefix = f"record {record_index}: "
        if field:
            prefix += f"field {field!r}: "
        super().__init__(prefix + message)
        self.record_index = record_index
        self.field = field


class ContrastError(ValueError):
    """Invalid input to contrast construction."""


@dataclass(frozen=True)
class VqaInstance:
    """One visual question with its ambiguity annotation."""

    id: str
    image_ref: str
    question: str
    label: Label
    category: Optional[AmbiguityCategory] = None
    reference_clarification: Optional[str] = None
    reference_answer: Optional[str] = None
    provenance: Provenance = Provenance.ORIGINAL
    source_id: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise SchemaError("empty id", field="id")
        if not self.image_ref:
            raise SchemaError("empty image_ref", field="image_ref")
        if not self.question or not self.question.strip():
            raise SchemaError("empty question", field="question")
        if self.label is Label.NEEDS_CLARIFICATION:
            if self.category is None:
                raise SchemaError(
                    "ambiguous instance needs a category", field="category"
                )
            if not self.reference_clarification:
                raise SchemaError(
                    "ambiguous instance needs a reference_clarification",
                    field="reference_clarification",
                )
        if self.provenance is Provenance.CONTEXT_COMPLETED:
            if self.label is not Label.NO_CLARIFICATION_NEEDED:
                raise SchemaError(
                    "context-completed variants are unambiguous by construction",
                    field="label",
                )
            if not self.source_id:
                raise SchemaError("variant missing source_id", field="source_id")
        if self.provenance is Provenance.IRRELEVANT_INJECTED:
            if self.label is not Label.NEEDS_CLARIFICATION:
                raise SchemaError(
                    "irrelevant-injected variants stay ambiguous",
                    field="label",
                )
            if not self.source_id:
                raise SchemaError("variant missing source_id", field="source_id")

    @property
    def group_key(self) -> str:
        """Variants share their source's key so splits keep families together."""
        return self.source_id or self.id

    def to_record(self) -> dict:
        return {
            "schema_version": DATASET_SCHEMA_VERSION,
            "id": self.id,
            "image_ref": self.image_ref,
            "question": self.question,
            "label": self.label.value,
            "category": self.category.value if self.category else None,
            "reference_clarification": self.reference_clarification,
            "reference_answer": self.reference_answer,
            "provenance": self.provenance.value,
            "source_id": self.source_id,
        }

    @classmethod
    def from_record(cls, record: dict, index: Optional[int] = None) -> "VqaInstance":
        if not isinstance(record, dict):
            raise SchemaError("record is not an object", record_index=index)
        version = record.get("schema_version")
        if version != DATASET_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported schema_version {version!r}",
                record_index=index, field="schema_version",
            )
        def enum_field(enum_cls, name, default=None):
            raw = record.get(name, default)
            if raw is None:
                return None
            try:
                return enum_cls(raw)
            except ValueError:
                raise SchemaError(
                    f"unknown value {raw!r}", record_index=index, field=name
                ) from None
        try:
            return cls(
                id=str(record.get("id") or ""),
                image_ref=str(record.get("image_ref") or ""),
                question=str(record.get("question") or ""),
                label=enum_field(Label, "label"),
                category=enum_field(AmbiguityCategory, "category"),
                reference_clarification=record.get("reference_clarification"),
                reference_answer=record.get("reference_answer"),
                provenance=enum_field(Provenance, "provenance", "original"),
                source_id=record.get("source_id"),
            )
        except SchemaError as exc:
            if exc.record_index is None:
                raise SchemaError(str(exc), record_index=index) from None
            raise
        except TypeError as exc:
            raise SchemaError(str(exc), record_index=index) from None

    def is_ambiguous(self) -> bool:
        return self.label is Label.NEEDS_CLARIFICATION


def load_dataset(path) -> list[VqaInstance]:
    """Read a JSONL dataset; rejects duplicate ids and malformed records."""
    instances: list[VqaInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", record_index=index) from exc
            inst = VqaInstance.from_record(record, index=index)
            if inst.id in seen:
                raise SchemaError(f"duplicate id {inst.id!r}", record_index=index, field="id")
            seen.add(inst.id)
            instances.append(inst)
    return instances


def save_dataset(instances: Iterable[VqaInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), sort_keys=True, ensure_ascii=False) + "\n")


def splice_context(question: str, context: str) -> str:
    """Insert context before the terminal question mark with a single space.

    "Is this behavior legal?" + "in Germany" gives
    "Is this behavior legal in Germany?". A question without a terminal '?'
    just gets the context appended.
    """
    context = context.strip()
    if not context:
        raise ContrastError("empty context string")
    trimmed = question.rstrip()
    if trimmed.endswith("?"):
        return f"{trimmed[:-1].rstrip()} {context}?"
    return f"{trimmed} {context}"


@dataclass(frozen=True)
class ContrastAnnotation:
    """Author-supplied context strings for one ambiguous instance.

    ``completed_question`` / ``irrelevant_question`` override the splice with
    a full replacement question when plain insertion reads badly.
    """

    id: str
    completion_context: Optional[str] = None
    irrelevant_context: Optional[str] = None
    completed_question: Optional[str] = None
    irrelevant_question: Optional[str] = None


def load_annotations(path) -> dict[str, ContrastAnnotation]:
    annotations: dict[str, ContrastAnnotation] = {}
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", record_index=index) from exc
            if "id" not in record:
                raise SchemaError("annotation missing id", record_index=index, field="id")
            ann = ContrastAnnotation(
                id=str(record["id"]),
                completion_context=record.get("completion_context"),
                irrelevant_context=record.get("irrelevant_context"),
                completed_question=record.get("completed_question"),
                irrelevant_question=record.get("irrelevant_question"),
            )
            if ann.id in annotations:
                raise SchemaError(f"duplicate annotation id {ann.id!r}",
                                  record_index=index, field="id")
            annotations[ann.id] = ann
    return annotations


def make_contrast(
    inst: VqaInstance,
    completion_context: Optional[str] = None,
    irrelevant_context: Optional[str] = None,
    *,
    completed_question: Optional[str] = None,
    irrelevant_question: Optional[str] = None,
) -> tuple[VqaInstance, VqaInstance]:
    """Build (context-completed, irrelevant-injected) variants of one instance.

    Context strings are spliced before the question's terminal '?'; a full
    replacement question overrides the splice for hand-edited phrasing. The
    completed variant becomes unambiguous and drops the clarification
    annotation; the irrelevant variant keeps the ambiguity label, category,
    and reference clarification of its source.
    """
    if not inst.is_ambiguous():
        raise ContrastError(f"{inst.id}: only ambiguous instances take contrast variants")
    if inst.provenance is not Provenance.ORIGINAL:
        raise ContrastError(f"{inst.id}: contrast variants of variants are not allowed")

    if completed_question:
        completed_q = completed_question
    elif completion_context:
        completed_q = splice_context(inst.question, completion_context)
    else:
        raise ContrastError(f"{inst.id}: no completion context given")
    if irrelevant_question:
        irrelevant_q = irrelevant_question
    elif irrelevant_context:
        irrelevant_q = splice_context(inst.question, irrelevant_context)
    else:
        raise ContrastError(f"{inst.id}: no irrelevant context given")

    completed = VqaInstance(
        id=f"{inst.id}-completed",
        image_ref=inst.image_ref,
        question=completed_q,
        label=Label.NO_CLARIFICATION_NEEDED,
        category=None,
        reference_clarification=None,
        reference_answer=inst.reference_answer,
        provenance=Provenance.CONTEXT_COMPLETED,
        source_id=inst.id,
    )
    irrelevant = replace(
        inst,
        id=f"{inst.id}-irrelevant",
        question=irrelevant_q,
        provenance=Provenance.IRRELEVANT_INJECTED,
        source_id=inst.id,
    )
    return completed, irrelevant


def augment_with_contrast(
    instances: Sequence[VqaInstance],
    annotations: dict[str, ContrastAnnotation],
) -> list[VqaInstance]:
    """Append contrast variants after each annotated ambiguous instance.

    Rejects inputs that already contain variants (augmenting twice would
    nest provenance) and annotations that point at unknown or unambiguous
    ids. Ambiguous instances without an annotation pass through unchanged.
    """
    if any(i.provenance is not Provenance.ORIGINAL for i in instances):
        raise ContrastError("input already contains contrast variants")
    by_id = {i.id: i for i in instances}
    for ann_id in annotations:
        if ann_id not in by_id:
            raise ContrastError(f"annotation for unknown id {ann_id!r}")
        if not by_id[ann_id].is_ambiguous():
            raise ContrastError(f"annotation for unambiguous id {ann_id!r}")
    out: list[VqaInstance] = []
    for inst in instances:
        out.append(inst)
        ann = annotations.get(inst.id)
        if ann is not None:
            completed, irrelevant = make_contrast(
                inst,
                ann.completion_context,
                ann.irrelevant_context,
                completed_question=ann.completed_question,
                irrelevant_question=ann.irrelevant_question,
            )
            out.extend((completed, irrelevant))
    return out


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self):
        for name, value in (("train", self.train), ("val", self.val), ("test", self.test)):
            if value < 0:
                raise ValueError(f"{name} ratio is negative")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


@dataclass(frozen=True)
class Splits:
    train: tuple[VqaInstance, ...]
    val: tuple[VqaInstance, ...]
    test: tuple[VqaInstance, ...]
    assignment: dict[str, str]  # group key -> partition name

    def sizes(self) -> dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}


def _ceil_guarded(x: float) -> int:
    # 1e-9 guard keeps float noise like 20*0.15 == 3.0000000000000004 honest.
    return math.ceil(x - 1e-9)


def _floor_guarded(x: float) -> int:
    return math.floor(x + 1e-9)


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """(train, val, test) counts: val and test round up, train absorbs the rest.

    275 at 70/15/15 gives 191/42/42. When rounding up would consume the whole
    set (tiny inputs), val and test round down instead, so a single item
    lands in train.
    """
    n_val = _ceil_guarded(n * spec.val)
    n_test = _ceil_guarded(n * spec.test)
    if n_val + n_test >= n:
        n_val = _floor_guarded(n * spec.val)
        n_test = _floor_guarded(n * spec.test)
    return n - n_val - n_test, n_val, n_test


def split_dataset(instances: Sequence[VqaInstance], spec: SplitSpec) -> Splits:
    """Seeded grouped split; a variant always follows its source instance."""
    order = {inst.id: i for i, inst in enumerate(instances)}
    groups: dict[str, list[VqaInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.group_key, []).append(inst)

    keys = sorted(groups)
    random.Random(spec.seed).shuffle(keys)
    n_train, n_val, _ = split_sizes(len(keys), spec)

    assignment: dict[str, str] = {}
    for pos, key in enumerate(keys):
        if pos < n_train:
            assignment[key] = "train"
        elif pos < n_train + n_val:
            assignment[key] = "val"
        else:
            assignment[key] = "test"

    buckets: dict[str, list[VqaInstance]] = {"train": [], "val": [], "test": []}
    for key, members in groups.items():
        buckets[assignment[key]].extend(members)
    for bucket in buckets.values():
        bucket.sort(key=lambda inst: order[inst.id])
    return Splits(
        train=tuple(buckets["train"]),
        val=tuple(buckets["val"]),
        test=tuple(buckets["test"]),
        assignment=assignment,
    )
