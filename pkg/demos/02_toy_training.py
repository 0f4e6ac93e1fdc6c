"""Group-relative training on a softmax-over-templates toy policy.

One template earns the maximum composite reward and the rest earn the
minimum, so the policy should pile its mass onto the good one.
"""

from __future__ import annotations

from vqaclarify.grpo import ToyPolicy, TrainConfig, train_toy
from vqaclarify.text_rewards import RewardBreakdown

BEST = RewardBreakdown.build(
    format=0.5, relevance=0.3, novelty=0.3, resolution=0.5, groundtruth=1.0
).total
WORST = RewardBreakdown.build(
    format=-0.5, relevance=-0.1, novelty=-0.3, resolution=-0.3, groundtruth=0.0
).total

TEMPLATES = [f"template-{i}" for i in range(10)]
TARGET = "template-3"


def reward(template: str) -> float:
    return BEST if template == TARGET else WORST


def main() -> None:
    policy = ToyPolicy.uniform(TEMPLATES)
    config = TrainConfig(
        group_size=2, learning_rate=0.5, kl_beta=0.0, steps=500, seed=0
    )
    trace = train_toy(policy, reward, config)

    print(f"reward levels: best {BEST:+.1f}, worst {WORST:+.1f}")
    print("expected reward, averaged over 50-step windows:")
    expected = [r.expected_reward for r in trace.records]
    for start in range(0, len(expected), 50):
        window = expected[start:start + 50]
        print(f"  steps {start:3d}-{start + len(window) - 1:3d}  "
              f"{sum(window) / len(window):+.3f}")

    probabilities = policy.probabilities()
    print("\nfinal policy:")
    for template, p in zip(TEMPLATES, probabilities):
        bar = "#" * int(round(p * 40))
        print(f"  {template:12s} {p:6.3f} {bar}")
    print(f"\nentropy {policy.entropy():.3f} nats")


if __name__ == "__main__":
    main()
