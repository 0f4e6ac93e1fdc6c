"""Build contrast variants and split the corpus without leaking sources.

Each annotated ambiguous question gains a context-completed twin (no longer
ambiguous) and an irrelevant-injection twin (still ambiguous); the grouped
split keeps every variant in the same partition as its source.
"""

from __future__ import annotations

from vqaclarify.dataset import (
    ContrastAnnotation,
    Label,
    Provenance,
    SplitSpec,
    VqaInstance,
    augment_with_contrast,
    make_contrast,
    split_dataset,
)
from vqaclarify.text_rewards import AmbiguityCategory


def ambiguous(i: int) -> VqaInstance:
    return VqaInstance(
        id=f"amb{i:03d}",
        image_ref=f"images/scene{i:03d}.jpg",
        question=f"Is activity {i} allowed here?",
        label=Label.NEEDS_CLARIFICATION,
        category=AmbiguityCategory.LOCATION_ORIENTATION,
        reference_clarification="Where is this taking place?",
    )


def main() -> None:
    source = ambiguous(0)
    completed, irrelevant = make_contrast(
        source, "in a public park", "while it is raining"
    )
    print("contrast pair for one source question:")
    print(f"  source     {source.question!r}  label={source.label.value}")
    print(f"  completed  {completed.question!r}  label={completed.label.value}")
    print(f"  irrelevant {irrelevant.question!r}  label={irrelevant.label.value}")

    corpus = [ambiguous(i) for i in range(12)]
    annotations = {
        inst.id: ContrastAnnotation(
            inst.id, "in a public park", "while it is raining"
        )
        for inst in corpus[:6]
    }
    augmented = augment_with_contrast(corpus, annotations)
    print(f"\naugmented corpus: {len(corpus)} sources -> {len(augmented)} rows")

    splits = split_dataset(augmented, SplitSpec(seed=0))
    print(f"grouped split sizes: {splits.sizes()}")

    partition_of = {}
    for name, part in (("train", splits.train), ("val", splits.val),
                       ("test", splits.test)):
        for inst in part:
            partition_of[inst.id] = name
    print("\nvariants travel with their source:")
    for inst in augmented:
        if inst.provenance is Provenance.ORIGINAL:
            continue
        same = partition_of[inst.id] == partition_of[inst.source_id]
        print(f"  {inst.id:22s} {inst.provenance.value:18s} "
              f"{partition_of[inst.id]:5s} (source {partition_of[inst.source_id]:5s})"
              f"  aligned={same}")


if __name__ == "__main__":
    main()
