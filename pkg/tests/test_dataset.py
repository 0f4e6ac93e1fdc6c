"""Dataset schema, contrast construction, and split arithmetic tests."""

from __future__ import annotations

import json

import pytest

from vqaclarify.dataset import (
    ContrastAnnotation,
    ContrastError,
    Label,
    Provenance,
    SchemaError,
    SplitSpec,
    VqaInstance,
    augment_with_contrast,
    load_annotations,
    load_dataset,
    make_contrast,
    save_dataset,
    splice_context,
    split_dataset,
    split_sizes,
)
from vqaclarify.text_rewards import AmbiguityCategory

from conftest import make_instance, write_jsonl


class TestVqaInstanceValidation:
    def test_ambiguous_needs_category(self):
        with pytest.raises(SchemaError, match="category"):
            make_instance(category=None)

    def test_ambiguous_needs_reference_clarification(self):
        with pytest.raises(SchemaError, match="reference_clarification"):
            make_instance(reference_clarification=None)

    def test_empty_fields_rejected(self):
        with pytest.raises(SchemaError, match="id"):
            make_instance(id="")
        with pytest.raises(SchemaError, match="question"):
            make_instance(question="   ")
        with pytest.raises(SchemaError, match="image_ref"):
            make_instance(image_ref="")

    def test_completed_variant_must_be_unambiguous(self):
        with pytest.raises(SchemaError, match="unambiguous"):
            make_instance(provenance=Provenance.CONTEXT_COMPLETED, source_id="q0")

    def test_variant_needs_source_id(self):
        with pytest.raises(SchemaError, match="source_id"):
            make_instance(provenance=Provenance.IRRELEVANT_INJECTED)

    def test_irrelevant_variant_stays_ambiguous(self):
        with pytest.raises(SchemaError, match="ambiguous"):
            make_instance(
                label=Label.NO_CLARIFICATION_NEEDED,
                provenance=Provenance.IRRELEVANT_INJECTED,
                source_id="q0",
            )

    def test_group_key_follows_source(self):
        original = make_instance()
        variant = make_instance(
            id="q1-irrelevant",
            provenance=Provenance.IRRELEVANT_INJECTED,
            source_id="q1",
        )
        assert original.group_key == "q1"
        assert variant.group_key == "q1"


class TestRecordRoundTrip:
    def test_to_record_from_record(self, ambiguous_instance):
        record = ambiguous_instance.to_record()
        assert record["schema_version"] == 1
        assert VqaInstance.from_record(record) == ambiguous_instance

    def test_unknown_schema_version(self, ambiguous_instance):
        record = ambiguous_instance.to_record() | {"schema_version": 2}
        with pytest.raises(SchemaError, match="schema_version"):
            VqaInstance.from_record(record, index=4)

    def test_unknown_label_names_the_record(self, ambiguous_instance):
        record = ambiguous_instance.to_record() | {"label": "unsure"}
        with pytest.raises(SchemaError, match="record 7"):
            VqaInstance.from_record(record, index=7)

    def test_file_round_trip(self, tmp_path, ambiguous_instance, plain_instance):
        path = tmp_path / "data.jsonl"
        save_dataset([ambiguous_instance, plain_instance], path)
        assert load_dataset(path) == [ambiguous_instance, plain_instance]

    def test_duplicate_ids_rejected(self, tmp_path, ambiguous_instance):
        path = tmp_path / "data.jsonl"
        save_dataset([ambiguous_instance], path)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(ambiguous_instance.to_record()) + "\n")
        with pytest.raises(SchemaError, match="duplicate id"):
            load_dataset(path)

    def test_bad_json_reports_record_index(self, tmp_path, ambiguous_instance):
        path = tmp_path / "data.jsonl"
        save_dataset([ambiguous_instance], path)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("{not json\n")
        with pytest.raises(SchemaError, match="record 1"):
            load_dataset(path)

    def test_blank_lines_are_skipped(self, tmp_path, ambiguous_instance):
        path = tmp_path / "data.jsonl"
        content = json.dumps(ambiguous_instance.to_record())
        path.write_text(f"\n{content}\n\n")
        assert load_dataset(path) == [ambiguous_instance]


class TestSpliceContext:
    def test_disambiguating_context(self):
        assert splice_context("Is this behavior legal?", "in Germany") == (
            "Is this behavior legal in Germany?"
        )

    def test_irrelevant_context(self):
        assert splice_context(
            "Is this behavior legal?", "while wearing a blue jacket"
        ) == "Is this behavior legal while wearing a blue jacket?"

    def test_temporal_context(self):
        assert splice_context("Can this vehicle be parked here?", "on Sundays") == (
            "Can this vehicle be parked here on Sundays?"
        )

    def test_no_terminal_question_mark_appends(self):
        assert splice_context("Tell me the time", "in Paris") == (
            "Tell me the time in Paris"
        )

    def test_empty_context_rejected(self):
        with pytest.raises(ContrastError):
            splice_context("Is this legal?", "   ")


class TestMakeContrast:
    def test_completed_variant_flips_the_label(self):
        inst = make_instance(
            id="d1",
            question="Is this behavior legal?",
            category=AmbiguityCategory.CULTURAL,
            reference_clarification="Which country are you asking about?",
            reference_answer="yes",
        )
        completed, irrelevant = make_contrast(
            inst, "in Germany", "while wearing a blue jacket"
        )
        assert completed.id == "d1-completed"
        assert completed.question == "Is this behavior legal in Germany?"
        assert completed.label is Label.NO_CLARIFICATION_NEEDED
        assert completed.category is None
        assert completed.reference_clarification is None
        assert completed.reference_answer == "yes"
        assert completed.provenance is Provenance.CONTEXT_COMPLETED
        assert completed.source_id == "d1"

        assert irrelevant.id == "d1-irrelevant"
        assert irrelevant.question == (
            "Is this behavior legal while wearing a blue jacket?"
        )
        assert irrelevant.label is Label.NEEDS_CLARIFICATION
        assert irrelevant.category is AmbiguityCategory.CULTURAL
        assert irrelevant.reference_clarification == inst.reference_clarification
        assert irrelevant.provenance is Provenance.IRRELEVANT_INJECTED
        assert irrelevant.source_id == "d1"

    def test_replacement_question_overrides_the_splice(self, ambiguous_instance):
        completed, _ = make_contrast(
            ambiguous_instance,
            irrelevant_context="on a sunny day",
            completed_question="Which one is my mother, the taller woman?",
        )
        assert completed.question == "Which one is my mother, the taller woman?"

    def test_unambiguous_source_rejected(self, plain_instance):
        with pytest.raises(ContrastError, match="ambiguous"):
            make_contrast(plain_instance, "in Germany", "on Sundays")

    def test_variant_of_a_variant_rejected(self, ambiguous_instance):
        _, irrelevant = make_contrast(ambiguous_instance, "from my side", "today")
        with pytest.raises(ContrastError, match="not allowed"):
            make_contrast(irrelevant, "in Germany", "on Sundays")

    def test_missing_context_rejected(self, ambiguous_instance):
        with pytest.raises(ContrastError, match="completion"):
            make_contrast(ambiguous_instance, irrelevant_context="today")
        with pytest.raises(ContrastError, match="irrelevant"):
            make_contrast(ambiguous_instance, completion_context="in the photo")


class TestAugmentWithContrast:
    def build_corpus(self):
        instances = [
            make_instance(id="a1", question="Is this behavior legal?",
                          category=AmbiguityCategory.CULTURAL,
                          reference_clarification="Which country?"),
            make_instance(id="p1", label=Label.NO_CLARIFICATION_NEEDED,
                          question="What color is the car?"),
            make_instance(id="a2", question="Can this vehicle be parked here?",
                          category=AmbiguityCategory.TEMPORAL,
                          reference_clarification="At what time of day?"),
        ]
        annotations = {
            "a1": ContrastAnnotation("a1", "in Germany", "while wearing a blue jacket"),
            "a2": ContrastAnnotation("a2", "on weekdays", "on Sundays"),
        }
        return instances, annotations

    def test_variants_follow_their_source(self):
        instances, annotations = self.build_corpus()
        augmented = augment_with_contrast(instances, annotations)
        assert [i.id for i in augmented] == [
            "a1", "a1-completed", "a1-irrelevant",
            "p1",
            "a2", "a2-completed", "a2-irrelevant",
        ]

    def test_label_alignment_is_exhaustive(self):
        instances, annotations = self.build_corpus()
        for inst in augment_with_contrast(instances, annotations):
            if inst.provenance is Provenance.CONTEXT_COMPLETED:
                assert inst.label is Label.NO_CLARIFICATION_NEEDED
                assert inst.group_key == inst.source_id
            elif inst.provenance is Provenance.IRRELEVANT_INJECTED:
                assert inst.label is Label.NEEDS_CLARIFICATION
                assert inst.group_key == inst.source_id
            else:
                assert inst.group_key == inst.id

    def test_double_augmentation_rejected(self):
        instances, annotations = self.build_corpus()
        augmented = augment_with_contrast(instances, annotations)
        with pytest.raises(ContrastError, match="already contains"):
            augment_with_contrast(augmented, annotations)

    def test_unknown_annotation_id_rejected(self):
        instances, _ = self.build_corpus()
        with pytest.raises(ContrastError, match="unknown id"):
            augment_with_contrast(
                instances, {"ghost": ContrastAnnotation("ghost", "x", "y")}
            )

    def test_annotation_for_unambiguous_id_rejected(self):
        instances, _ = self.build_corpus()
        with pytest.raises(ContrastError, match="unambiguous"):
            augment_with_contrast(
                instances, {"p1": ContrastAnnotation("p1", "x", "y")}
            )


class TestLoadAnnotations:
    def test_round_trip(self, tmp_path):
        path = write_jsonl(
            tmp_path / "ann.jsonl",
            [
                {"id": "a1", "completion_context": "in Germany",
                 "irrelevant_context": "while wearing a blue jacket"},
                {"id": "a2", "completed_question": "Full replacement?"},
            ],
        )
        annotations = load_annotations(path)
        assert set(annotations) == {"a1", "a2"}
        assert annotations["a1"].completion_context == "in Germany"
        assert annotations["a2"].completed_question == "Full replacement?"
        assert annotations["a2"].completion_context is None

    def test_missing_id_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "ann.jsonl", [{"completion_context": "x"}])
        with pytest.raises(SchemaError, match="id"):
            load_annotations(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_jsonl(
            tmp_path / "ann.jsonl", [{"id": "a1"}, {"id": "a1"}]
        )
        with pytest.raises(SchemaError, match="duplicate"):
            load_annotations(path)


class TestSplitSizes:
    def test_reference_corpus_counts(self):
        assert split_sizes(275, SplitSpec()) == (191, 42, 42)

    def test_val_and_test_round_up(self):
        # 20 * 0.15 = 3.0000000000000004 in floats; the guard keeps it at 3
        assert split_sizes(20, SplitSpec()) == (14, 3, 3)
        assert split_sizes(10, SplitSpec()) == (6, 2, 2)

    def test_tiny_inputs_fall_back_to_floors(self):
        assert split_sizes(1, SplitSpec()) == (1, 0, 0)
        assert split_sizes(2, SplitSpec()) == (2, 0, 0)

    def test_counts_always_total_n(self):
        spec = SplitSpec()
        for n in range(1, 400):
            train, val, test = split_sizes(n, spec)
            assert train + val + test == n
            assert min(train, val, test) >= 0

    def test_ratio_validation(self):
        with pytest.raises(ValueError, match="sum"):
            SplitSpec(train=0.8, val=0.15, test=0.15)
        with pytest.raises(ValueError, match="negative"):
            SplitSpec(train=1.2, val=-0.1, test=-0.1)


class TestSplitDataset:
    def corpus(self, n=30):
        return [
            make_instance(id=f"q{i:03d}", question=f"Which one is item {i}?")
            for i in range(n)
        ]

    def test_same_seed_same_split(self):
        instances = self.corpus()
        a = split_dataset(instances, SplitSpec(seed=7))
        b = split_dataset(instances, SplitSpec(seed=7))
        assert a.assignment == b.assignment
        assert a.train == b.train

    def test_different_seed_different_split(self):
        instances = self.corpus()
        a = split_dataset(instances, SplitSpec(seed=0))
        b = split_dataset(instances, SplitSpec(seed=1))
        assert a.assignment != b.assignment

    def test_partitions_are_disjoint_and_complete(self):
        instances = self.corpus()
        splits = split_dataset(instances, SplitSpec(seed=3))
        ids = [i.id for part in (splits.train, splits.val, splits.test) for i in part]
        assert sorted(ids) == sorted(i.id for i in instances)
        assert len(set(ids)) == len(ids)

    def test_variants_never_cross_partitions(self):
        instances = [
            make_instance(id=f"a{i}", question=f"Is item {i} acceptable here?",
                          category=AmbiguityCategory.CULTURAL,
                          reference_clarification="Which country?")
            for i in range(12)
        ]
        annotations = {
            inst.id: ContrastAnnotation(inst.id, "in Germany", "on Sundays")
            for inst in instances
        }
        augmented = augment_with_contrast(instances, annotations)
        splits = split_dataset(augmented, SplitSpec(seed=5))
        partition_of = {}
        for name, part in (("train", splits.train), ("val", splits.val),
                           ("test", splits.test)):
            for inst in part:
                partition_of[inst.id] = name
        for inst in augmented:
            assert partition_of[inst.id] == partition_of[inst.group_key]

    def test_buckets_preserve_input_order(self):
        instances = self.corpus()
        splits = split_dataset(instances, SplitSpec(seed=2))
        order = {inst.id: i for i, inst in enumerate(instances)}
        for part in (splits.train, splits.val, splits.test):
            positions = [order[i.id] for i in part]
            assert positions == sorted(positions)

    def test_sizes_count_groups_not_instances(self):
        instances = [
            make_instance(id=f"a{i}", question=f"Is item {i} acceptable here?",
                          category=AmbiguityCategory.CULTURAL,
                          reference_clarification="Which country?")
            for i in range(10)
        ]
        annotations = {
            inst.id: ContrastAnnotation(inst.id, "in Germany", "on Sundays")
            for inst in instances
        }
        augmented = augment_with_contrast(instances, annotations)  # 30 rows
        splits = split_dataset(augmented, SplitSpec(seed=0))
        # 10 groups at 70/15/15 -> 6/2/2 groups of three rows each
        assert splits.sizes() == {"train": 18, "val": 6, "test": 6}
