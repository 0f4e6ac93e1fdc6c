"""Module-level and system-level evaluation on synthetic outcomes."""

from __future__ import annotations

import random

from vqaclarify.evaluation import (
    controller_metrics,
    metrics_from_counts,
    render_metrics_table,
    summarize_resolution_scores,
    vqa_accuracy,
)
from vqaclarify.orchestrator import ControllerAction


def main() -> None:
    # Published-style confusion row: clarify is the positive class.
    counts = metrics_from_counts(tp=35, fn=7, fp=18, tn=24)
    print("controller metrics from counts:")
    print(f"  accuracy={counts.accuracy:.3f} precision={counts.precision:.3f} "
          f"recall={counts.recall:.3f} f1={counts.f1:.3f}")

    # Same metrics from paired decision lists.
    rng = random.Random(0)
    actions = (ControllerAction.CLARIFY, ControllerAction.ANSWER)
    gold = [rng.choice(actions) for _ in range(60)]
    predicted = [
        g if rng.random() < 0.8 else rng.choice(actions) for g in gold
    ]
    paired = controller_metrics(predicted, gold)
    print(f"\nfrom 60 paired decisions: tp={paired.tp} fp={paired.fp} "
          f"tn={paired.tn} fn={paired.fn}")

    resolution = summarize_resolution_scores(
        [("q1", 0.5), ("q2", 0.5), ("q3", -0.3), ("q4", 0.5), ("q5", -0.3)]
    )
    accuracy = vqa_accuracy(
        answers=["red", "the left one", "two"],
        references=[["red"], ["The left one."], ["three"]],
    )

    print("\nrendered report:")
    print(render_metrics_table(paired, resolution, accuracy))


if __name__ == "__main__":
    main()
