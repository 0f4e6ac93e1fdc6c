"""Clarify-or-answer orchestration for context-dependent visual questions.

The package covers the full loop: deciding whether a visual question needs
clarification, asking exactly one clarifying question when it does, scoring
candidate clarifications with a five-signal reward suite, optimizing a
policy with group-relative advantages, building contrast datasets, and
evaluating each stage.
"""

from .backend import (
    BackendError,
    BackendUnavailable,
    CachedBackend,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    ConfigError,
    GenerationLimits,
    HttpChatBackend,
    HttpConfig,
    ModelBackend,
    PromptTooLong,
    ResponseCache,
    ScriptedMockBackend,
    mock_from_fixture,
)
from .dataset import (
    ContrastAnnotation,
    Label,
    Provenance,
    SchemaError,
    SplitSpec,
    Splits,
    VqaInstance,
    augment_with_contrast,
    load_dataset,
    make_contrast,
    save_dataset,
    split_dataset,
)
from .evaluation import (
    ControllerMetrics,
    ResolutionScoreReport,
    VqaAccuracyReport,
    controller_metrics,
    vqa_accuracy,
)
from .grpo import (
    AdvantageSet,
    DegenerateGroupError,
    GroupSample,
    ToyPolicy,
    TrainConfig,
    compute_advantages,
    grpo_loss,
    toy_policy_gradient,
    train_toy,
)
from .judge_rewards import (
    JudgeMode,
    JudgeParseError,
    ResolutionProbe,
    RewardUnavailable,
    groundtruth_reward,
    normalize_answer,
    resolution_reward,
    score_clarification,
)
from .orchestrator import (
    ControllerAction,
    ControllerDecision,
    EpisodeMode,
    EpisodeTrace,
    RoleBindings,
    run_batch,
    run_episode,
)
from .text_rewards import (
    AmbiguityCategory,
    ClarificationCandidate,
    KeywordTable,
    RewardBreakdown,
    RewardWeights,
    format_reward,
    jaccard_similarity,
    novelty_reward,
    relevance_reward,
    score_text,
)

__version__ = "0.1.0"
