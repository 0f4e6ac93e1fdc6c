"""Deterministic text-side scoring of clarification questions.

Three rule-based signals: well-formedness (question mark plus length cap),
relevance to the missing-information category (interrogative pattern prefix
and category keyword), and novelty against the original question (Jaccard
word overlap). All functions are pure and return exact constants, so scores
are reproducible across runs and platforms.
"""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

logger = logging.getLogger(__name__)

# Well-formedness: ends with '?' and stays under the word cap.
FORMAT_GOOD = 0.5
FORMAT_BAD = -0.5
MAX_QUESTION_WORDS = 50

# Relevance: both signals / exactly one / neither.
RELEVANCE_BOTH = 0.3
RELEVANCE_ONE = 0.1
RELEVANCE_NONE = -0.1

# Novelty: Jaccard similarity against the original question.
NOVELTY_NEAR_DUPLICATE = -0.3  # J > 0.8
NOVELTY_FRESH = 0.3            # J < 0.6
NOVELTY_MIDDLING = -0.1        # 0.6 <= J <= 0.8
JACCARD_HIGH = 0.8
JACCARD_LOW = 0.6

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class AmbiguityCategory(Enum):
    """What kind of off-image information the original question depends on."""

    LOCATION_ORIENTATION = "location_orientation"
    TEMPORAL = "temporal"
    CULTURAL = "cultural"
    ATTRIBUTE = "attribute"
    RELATIONSHIP = "relationship"


class KeywordTableError(ValueError):
    """Raised for keyword tables that cannot support relevance scoring."""


# Interrogative leads that mark a clause as question-shaped.
DEFAULT_PATTERN_PREFIXES = (
    "what", "which", "who", "where", "when", "how",
    "is", "are", "do", "does", "can", "could",
)

# Cultural must keep at least this trio; see KeywordTable validation.
_REQUIRED_CULTURAL = frozenset({"country", "city", "region"})

DEFAULT_KEYWORDS: Mapping[AmbiguityCategory, frozenset[str]] = {
    AmbiguityCategory.LOCATION_ORIENTATION: frozenset(
        {"direction", "facing", "left", "right", "location", "where", "side"}
    ),
    AmbiguityCategory.TEMPORAL: frozenset(
        {"time", "date", "season", "year", "morning", "month", "day", "hour"}
    ),
    AmbiguityCategory.CULTURAL: frozenset({"country", "city", "region"}),
    AmbiguityCategory.ATTRIBUTE: frozenset(
        {"age", "size", "type", "color", "status", "brand"}
    ),
    AmbiguityCategory.RELATIONSHIP: frozenset(
        {"relation", "relationship", "mother", "father", "friend", "family", "owner"}
    ),
}


@dataclass(frozen=True)
class KeywordTable:
    """Per-category keyword sets plus the interrogative prefixes.

    Loadable from a JSON config; compiled-in defaults otherwise. Every
    category must carry a non-empty keyword set, and the cultural set must
    retain {country, city, region} so region-style questions keep scoring.
    """

    keywords: Mapping[AmbiguityCategory, frozenset[str]]
    pattern_prefixes: tuple[str, ...] = DEFAULT_PATTERN_PREFIXES

    def __post_init__(self):
        if not self.pattern_prefixes:
            raise KeywordTableError("pattern prefix list is empty")
        for category in AmbiguityCategory:
            words = self.keywords.get(category)
            if not words:
                raise KeywordTableError(f"no keywords for category {category.value!r}")
        cultural = self.keywords[AmbiguityCategory.CULTURAL]
        missing = _REQUIRED_CULTURAL - set(cultural)
        if missing:
            raise KeywordTableError(
                "cultural keywords must include " + ", ".join(sorted(missing))
            )

    @classmethod
    def default(cls) -> "KeywordTable":
        return cls(keywords=dict(DEFAULT_KEYWORDS))

    @classmethod
    def from_file(cls, path) -> "KeywordTable":
        """Load overrides from JSON; unlisted categories keep their defaults.

        Expected shape::

            {"pattern_prefixes": ["what", ...],
             "keywords": {"temporal": ["time", ...], ...}}
        """
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise KeywordTableError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise KeywordTableError(f"{path}: top level must be an object")
        keywords = dict(DEFAULT_KEYWORDS)
        for name, words in (raw.get("keywords") or {}).items():
            try:
                category = AmbiguityCategory(name)
            except ValueError:
                raise KeywordTableError(f"{path}: unknown category {name!r}") from None
            keywords[category] = frozenset(str(w).lower() for w in words)
        prefixes = tuple(
            str(p).lower() for p in raw.get("pattern_prefixes", DEFAULT_PATTERN_PREFIXES)
        )
        return cls(keywords=keywords, pattern_prefixes=prefixes)

    def keywords_for(self, category: AmbiguityCategory) -> frozenset[str]:
        words = self.keywords.get(category)
        if not words:
            raise KeywordTableError(f"no keywords for category {category!r}")
        return words


_DEFAULT_TABLE: Optional[KeywordTable] = None


def default_table() -> KeywordTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = KeywordTable.default()
    return _DEFAULT_TABLE


def format_reward(candidate: str) -> float:
    """+0.5 for a question-mark-terminated candidate under 50 words, else -0.5.

    Word count is whitespace tokenization of the trimmed text; the empty
    string fails the terminator test and scores -0.5.
    """
    trimmed = candidate.strip()
    if trimmed.endswith("?") and len(trimmed.split()) < MAX_QUESTION_WORDS:
        return FORMAT_GOOD
    return FORMAT_BAD


def _clause_lead_words(text: str) -> list[str]:
    # First word of the candidate and of each clause after , ; or :
    leads = []
    for clause in re.split(r"[,;:]", text.lower()):
        for token in clause.split():
            word = token.strip(string.punctuation + "\u2018\u2019\u201c\u201d")
            if word:
                leads.append(word)
            break
    return leads


def matches_pattern(candidate: str, table: Optional[KeywordTable] = None) -> bool:
    """True when the candidate or one of its clauses leads with an interrogative."""
    table = table or default_table()
    prefixes = set(table.pattern_prefixes)
    return any(lead in prefixes for lead in _clause_lead_words(candidate))


def mentions_keyword(
    candidate: str, category: AmbiguityCategory, table: Optional[KeywordTable] = None
) -> bool:
    """True when any category keyword appears as a whole word."""
    table = table or default_table()
    lowered = candidate.lower()
    return any(
        re.search(r"\b" + re.escape(word) + r"\b", lowered)
        for word in table.keywords_for(category)
    )


def relevance_reward(
    candidate: str, category: AmbiguityCategory, table: Optional[KeywordTable] = None
) -> float:
    """+0.3 for pattern plus keyword, +0.1 for exactly one, -0.1 for neither."""
    table = table or default_table()
    hits = int(matches_pattern(candidate, table)) + int(
        mentions_keyword(candidate, category, table)
    )
    if hits == 2:
        return RELEVANCE_BOTH
    if hits == 1:
        return RELEVANCE_ONE
    return RELEVANCE_NONE


def tokenize_for_overlap(text: str) -> set[str]:
    """Lowercased word set with punctuation stripped, for Jaccard overlap."""
    return set(text.lower().translate(_PUNCT_TABLE).split())


def jaccard_similarity(text_a: str, text_b: str) -> float:
    """Jaccard similarity of the two word sets; both-empty counts as 1.0."""
    a = tokenize_for_overlap(text_a)
    b = tokenize_for_overlap(text_b)
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def novelty_reward(candidate: str, original_question: str) -> float:
    """Penalize near-duplicates of the original question, reward fresh wording.

    J > 0.8 scores -0.3, J < 0.6 scores +0.3, the closed band between scores
    -0.1. Two empty texts are identical by convention (J = 1.0).
    """
    j = jaccard_similarity(candidate, original_question)
    if j > JACCARD_HIGH:
        return NOVELTY_NEAR_DUPLICATE
    if j < JACCARD_LOW:
        return NOVELTY_FRESH
    return NOVELTY_MIDDLING


@dataclass(frozen=True)
class RewardWeights:
    """Per-component multipliers for the total reward; all 1.0 by default."""

    format: float = 1.0
    relevance: float = 1.0
    resolution: float = 1.0
    novelty: float = 1.0
    groundtruth: float = 1.0

    @classmethod
    def from_mapping(cls, raw: Mapping[str, float]) -> "RewardWeights":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown reward weight(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in raw.items()})


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component scores plus the weighted total.

    ``resolution`` and ``groundtruth`` are None when the judge-backed signals
    were not computed (text-only scoring); absent components contribute
    nothing to the total.
    """

    format: float
    relevance: float
    novelty: float
    resolution: Optional[float] = None
    groundtruth: Optional[float] = None
    total: float = 0.0

    @classmethod
    def build(
        cls,
        *,
        format: float,
        relevance: float,
        novelty: float,
        resolution: Optional[float] = None,
        groundtruth: Optional[float] = None,
        weights: Optional[RewardWeights] = None,
    ) -> "RewardBreakdown":
        w = weights or RewardWeights()
        total = w.format * format + w.relevance * relevance + w.novelty * novelty
        if resolution is not None:
            total += w.resolution * resolution
        if groundtruth is not None:
            total += w.groundtruth * groundtruth
        return cls(
            format=format,
            relevance=relevance,
            novelty=novelty,
            resolution=resolution,
            groundtruth=groundtruth,
            total=total,
        )

    def as_dict(self) -> dict:
        return {
            "format": self.format,
            "relevance": self.relevance,
            "novelty": self.novelty,
            "resolution": self.resolution,
            "groundtruth": self.groundtruth,
            "total": self.total,
        }


@dataclass(frozen=True)
class ClarificationCandidate:
    """A generated clarification question plus its reward breakdown."""

    text: str
    breakdown: RewardBreakdown


def score_text(
    candidate: str,
    original_question: str,
    category: AmbiguityCategory,
    table: Optional[KeywordTable] = None,
    weights: Optional[RewardWeights] = None,
) -> RewardBreakdown:
    """Score the three deterministic components; judge-backed ones stay None."""
    return RewardBreakdown.build(
        format=format_reward(candidate),
        relevance=relevance_reward(candidate, category, table),
        novelty=novelty_reward(candidate, original_question),
        weights=weights,
    )
