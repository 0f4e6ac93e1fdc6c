"""Group-relative policy optimization core.

Advantages are computed per prompt group by subtracting the group mean
reward (no variance normalization), the loss is the negative
advantage-weighted mean log-probability plus an optional KL penalty against
a frozen reference, and a tiny softmax policy over a fixed candidate space
makes the whole update rule checkable against finite differences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .text_rewards import ClarificationCandidate

logger = logging.getLogger(__name__)


class DegenerateGroupError(ValueError):
    """A reward group too small for a relative baseline."""


class RewardFunctionError(RuntimeError):
    """The trainer's reward function raised; carries where and on what."""

    def __init__(self, step: int, candidate: str, cause: Exception):
        super().__init__(f"reward function failed at step {step} on {candidate!r}: {cause}")
        self.step = step
        self.candidate = candidate


@dataclass(frozen=True)
class AdvantageSet:
    advantages: np.ndarray
    group_mean: float


def compute_advantages(rewards: Sequence[float]) -> AdvantageSet:
    """Mean-center the group's rewards. Needs at least two members; with one
    the baseline equals the reward and every advantage collapses to zero."""
    if len(rewards) < 2:
        raise DegenerateGroupError(
            f"group needs at least 2 samples, got {len(rewards)}"
        )
    arr = np.asarray(rewards, dtype=np.float64)
    mean = float(arr.mean())
    return AdvantageSet(advantages=arr - mean, group_mean=mean)


@dataclass(frozen=True)
class GroupSample:
    """One prompt's sampled candidates with their rewards and log-probs."""

    prompt_id: str
    candidates: tuple[ClarificationCandidate, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise DegenerateGroupError(
                f"{self.prompt_id}: group needs at least 2 candidates"
            )
        if len(self.logprobs) != len(self.candidates):
            raise ValueError(f"{self.prompt_id}: logprobs/candidates length mismatch")

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(c.breakdown.total for c in self.candidates)


def policy_gradient_loss(
    logprobs: np.ndarray,
    advantages: np.ndarray,
    kl_beta: float = 0.0,
    ref_logprobs: Optional[np.ndarray] = None,
) -> float:
    """-(1/N) sum(logprob_i * adv_i) plus kl_beta * mean(logprob - ref)."""
    logprobs = np.asarray(logprobs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if logprobs.shape != advantages.shape:
        raise ValueError("logprobs and advantages must align")
    loss = -float(np.mean(logprobs * advantages))
    if kl_beta:
        if ref_logprobs is None:
            raise ValueError("kl_beta > 0 requires ref_logprobs")
        loss += kl_beta * float(np.mean(logprobs - np.asarray(ref_logprobs, dtype=np.float64)))
    return loss


def grpo_loss(
    sample: GroupSample,
    advantages: Optional[AdvantageSet] = None,
    kl_beta: float = 0.0,
    ref_logprobs: Optional[Sequence[float]] = None,
) -> float:
    adv = advantages or compute_advantages(sample.rewards)
    if len(adv.advantages) != len(sample.logprobs):
        raise ValueError("advantage set does not match the sample group")
    ref = np.asarray(ref_logprobs, dtype=np.float64) if ref_logprobs is not None else None
    return policy_gradient_loss(
        np.asarray(sample.logprobs), adv.advantages, kl_beta=kl_beta, ref_logprobs=ref
    )


@dataclass
class ToyPolicy:
    """Softmax distribution over a fixed list of candidate strings."""

    candidate_space: tuple[str, ...]
    logits: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        self.candidate_space = tuple(self.candidate_space)
        if not self.candidate_space:
            raise ValueError("empty candidate space")
        self.logits = np.asarray(self.logits, dtype=np.float64).copy()
        if self.logits.shape != (len(self.candidate_space),):
            raise ValueError("one logit per candidate required")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def uniform(cls, candidate_space: Sequence[str], temperature: float = 1.0) -> "ToyPolicy":
        return cls(
            candidate_space=tuple(candidate_space),
            logits=np.zeros(len(candidate_space)),
            temperature=temperature,
        )

    def log_probabilities(self) -> np.ndarray:
        scaled = self.logits / self.temperature
        scaled = scaled - scaled.max()  # stable softmax
        return scaled - np.log(np.exp(scaled).sum())

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probabilities())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(len(self.candidate_space), size=n, p=self.probabilities())

    def entropy(self) -> float:
        logp = self.log_probabilities()
        return -float(np.sum(np.exp(logp) * logp))

    def kl_to(self, other: "ToyPolicy") -> float:
        logp = self.log_probabilities()
        logq = other.log_probabilities()
        return float(np.sum(np.exp(logp) * (logp - logq)))


def toy_policy_gradient(
    policy: ToyPolicy,
    indices: np.ndarray,
    advantages: np.ndarray,
    kl_beta: float = 0.0,
) -> np.ndarray:
    """Exact gradient of the group loss with respect to the policy logits.

    For sampled actions a_i with advantages A_i:
        d loss / d logit_k = (1/(N*T)) * sum_i (kl_beta - A_i) * (1[a_i=k] - p_k)
    The KL term differentiates the penalty against the frozen reference (the
    reference's log-probs are constant, so only the log pi terms survive).
    """
    indices = np.asarray(indices, dtype=np.int64)
    advantages = np.asarray(advantages, dtype=np.float64)
    n = len(indices)
    if n == 0 or n != len(advantages):
        raise ValueError("indices and advantages must align and be non-empty")
    p = policy.probabilities()
    coef = kl_beta - advantages
    grad = np.bincount(indices, weights=coef, minlength=len(p)).astype(np.float64)
    grad -= coef.sum() * p
    return grad / (n * policy.temperature)


@dataclass
class TrainConfig:
    group_size: int = 2
    learning_rate: float = 2e-6
    kl_beta: float = 0.01
    steps: int = 100
    seed: int = 0
    clip_epsilon: Optional[float] = None  # reserved; single-step updates stay on-policy

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be positive")


@dataclass(frozen=True)
class StepRecord:
    step: int
    expected_reward: float
    loss: float
    entropy: float

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "expected_reward": self.expected_reward,
            "loss": self.loss,
            "entropy": self.entropy,
        }


@dataclass
class TrainingTrace:
    records: list[StepRecord] = field(default_factory=list)
    candidate_rewards: dict[str, float] = field(default_factory=dict)
    final_probabilities: Optional[np.ndarray] = None

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record.to_record(), sort_keys=True) + "\n")


def train_toy(
    policy: ToyPolicy,
    reward_fn: Callable[[str], float],
    config: TrainConfig,
) -> TrainingTrace:
    """Run group-relative updates on the toy policy, mutating it in place.

    Each step samples ``group_size`` candidates, mean-centers their rewards,
    and takes one analytic-gradient step on the loss. The reward function is
    deterministic per candidate, so the whole space is scored once up front
    (the expected-reward trace needs every candidate's reward anyway).
    """
    rng = np.random.default_rng(config.seed)
    trace = TrainingTrace()

    rewards_by_index = np.empty(len(policy.candidate_space), dtype=np.float64)
    for i, text in enumerate(policy.candidate_space):
        try:
            rewards_by_index[i] = float(reward_fn(text))
        except Exception as exc:  # noqa: BLE001 - reported with context
            raise RewardFunctionError(step=0, candidate=text, cause=exc) from exc
        trace.candidate_rewards[text] = float(rewards_by_index[i])

    ref_logprobs = policy.log_probabilities().copy() if config.kl_beta > 0 else None

    for step in range(1, config.steps + 1):
        logp = policy.log_probabilities()
        indices = policy.sample(rng, config.group_size)
        group_rewards = rewards_by_index[indices]
        adv = compute_advantages(group_rewards)
        ref = ref_logprobs[indices] if ref_logprobs is not None else None
        loss = policy_gradient_loss(
            logp[indices], adv.advantages, kl_beta=config.kl_beta, ref_logprobs=ref
        )
        grad = toy_policy_gradient(policy, indices, adv.advantages, config.kl_beta)
        policy.logits = policy.logits - config.learning_rate * grad

        expected = float(policy.probabilities() @ rewards_by_index)
        trace.records.append(
            StepRecord(step=step, expected_reward=expected, loss=loss,
                       entropy=policy.entropy())
        )

    trace.final_probabilities = policy.probabilities()
    return trace
