"""Evaluation metrics: episode scores, structure completion, BLEU, keyword P/R.

Episode metrics aggregate per-episode reward, binary success, and a
transform-invariant completion score built on the same max-match machinery the
reward uses.  Text metrics score Architect utterances against references:
BLEU-1..4 without smoothing, and precision/recall of domain keyword tokens
(colors, spatial relations, dialog moves).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from importlib import resources

from .matching import max_match
from .voxel import Structure

__all__ = [
    "EpisodeSummary",
    "KeywordLexicon",
    "LEXICON_CATEGORIES",
    "reward_score",
    "success_rate",
    "completion_rate",
    "rho",
    "summarize_episode",
    "tokenize",
    "bleu",
    "corpus_bleu",
    "keyword_pr",
    "corpus_keyword_pr",
    "default_lexicon",
    "load_lexicon",
]


# -- episode metrics -----------------------------------------------------------


@dataclass(frozen=True)
class EpisodeSummary:
    """Per-episode scoring record."""

    task_id: str
    g: float
    c: int
    rho: float
    steps_used: int

    def __post_init__(self) -> None:
        if self.c not in (0, 1):
            raise ValueError(f"c must be 0 or 1, got {self.c!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho!r}")
        if self.c == 1 and self.rho != 0.0:
            raise ValueError("a successful episode must have rho == 0")


def _mean(values: list[float], what: str) -> float:
    if not values:
        raise ValueError(f"{what} needs at least one episode")
    return sum(values) / len(values)


def reward_score(summaries: Iterable[EpisodeSummary]) -> float:
    """Mean episode reward over the batch."""
    return _mean([float(s.g) for s in summaries], "reward_score")


def success_rate(summaries: Iterable[EpisodeSummary]) -> float:
    """Fraction of episodes that reproduced their target exactly."""
    return _mean([float(s.c) for s in summaries], "success_rate")


def completion_rate(summaries: Iterable[EpisodeSummary]) -> float:
    """Mean (1 - rho) over the batch."""
    return _mean([1.0 - s.rho for s in summaries], "completion_rate")


def rho(built: Structure, target: Structure) -> float:
    """Normalized structural distance in [0, 1], invariant under the zone's
    rotation/translation group.

    rho = (|T| + |B| - 2*M) / max(1, |T| + |B|) where M is the best
    color-exact overlap over all zone transforms.  0 iff the build equals the
    target up to a transform; 1 iff nothing lines up at all.
    """
    m = max_match(built, target).max_match
    total = len(target) + len(built)
    return (total - 2 * m) / max(1, total)


def summarize_episode(
    task_id: str,
    g: float,
    built: Structure,
    target: Structure,
    steps_used: int,
) -> EpisodeSummary:
    """Bundle one finished episode into an EpisodeSummary (success derived
    from the structures)."""
    m = max_match(built, target).max_match
    success = int(m == len(target) == len(built))
    return EpisodeSummary(
        task_id=task_id,
        g=g,
        c=success,
        rho=rho(built, target),
        steps_used=steps_used,
    )


# -- tokenization ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word and single-punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


# -- BLEU -----------------------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    # Closest reference length; ties broken toward the shorter reference.
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def _clipped_matches(cand_tokens: Sequence[str], refs_tokens: Sequence[Sequence[str]], n: int) -> tuple[int, int]:
    cand_counts = _ngram_counts(cand_tokens, n)
    total = sum(cand_counts.values())
    if total == 0:
        return 0, 0
    best_ref: Counter = Counter()
    for ref in refs_tokens:
        for gram, cnt in _ngram_counts(ref, n).items():
            if cnt > best_ref[gram]:
                best_ref[gram] = cnt
    matched = sum(min(cnt, best_ref[gram]) for gram, cnt in cand_counts.items())
    return matched, total


def bleu(candidate: str, references: Sequence[str], n: int = 4) -> float:
    """BLEU-n for one candidate against one or more references.

    Geometric mean of clipped modified precisions for orders 1..n times the
    brevity penalty; no smoothing, so any zero precision zeroes the score.
    """
    if not 1 <= n <= 4:
        raise ValueError(f"n must be between 1 and 4, got {n}")
    cand = tokenize(candidate)
    if not cand:
        raise ValueError("candidate is empty after tokenization")
    refs = [tokenize(r) for r in references]
    if not refs:
        raise ValueError("at least one reference is required")

    log_sum = 0.0
    for order in range(1, n + 1):
        matched, total = _clipped_matches(cand, refs, order)
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)
    precision_part = math.exp(log_sum / n)

    r = _closest_ref_length(len(cand), [len(t) for t in refs])
    bp = 1.0 if len(cand) >= r else math.exp(1.0 - r / len(cand))
    return bp * precision_part


def corpus_bleu(pairs: Sequence[tuple[str, Sequence[str]]], n: int = 4) -> float:
    """Corpus-level BLEU-n: n-gram counts and lengths pooled over all pairs
    before the geometric mean and brevity penalty."""
    if not 1 <= n <= 4:
        raise ValueError(f"n must be between 1 and 4, got {n}")
    if not pairs:
        raise ValueError("corpus_bleu needs at least one pair")
    matched_by_order = [0] * n
    total_by_order = [0] * n
    cand_len_sum = 0
    ref_len_sum = 0
    for candidate, references in pairs:
        cand = tokenize(candidate)
        if not cand:
            raise ValueError("candidate is empty after tokenization")
        refs = [tokenize(r) for r in references]
        if not refs:
            raise ValueError("at least one reference is required")
        cand_len_sum += len(cand)
        ref_len_sum += _closest_ref_length(len(cand), [len(t) for t in refs])
        for order in range(1, n + 1):
            matched, total = _clipped_matches(cand, refs, order)
            matched_by_order[order - 1] += matched
            total_by_order[order - 1] += total

    log_sum = 0.0
    for matched, total in zip(matched_by_order, total_by_order):
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)
    precision_part = math.exp(log_sum / n)
    bp = 1.0 if cand_len_sum >= ref_len_sum else math.exp(1.0 - ref_len_sum / cand_len_sum)
    return bp * precision_part


# -- keyword precision / recall ---------------------------------------------------

LEXICON_CATEGORIES = ("colors", "spatial", "dialog")


@dataclass(frozen=True)
class KeywordLexicon:
    """Domain keyword sets used to score instruction vocabulary."""

    colors: frozenset[str]
    spatial: frozenset[str]
    dialog: frozenset[str]

    def __post_init__(self) -> None:
        for name in LEXICON_CATEGORIES:
            terms = getattr(self, name)
            if not terms:
                raise ValueError(f"lexicon category {name!r} is empty")
            bad = [t for t in terms if t != t.lower()]
            if bad:
                raise ValueError(f"lexicon terms must be lowercase: {bad}")

    def category(self, name: str) -> frozenset[str]:
        if name == "all":
            return self.colors | self.spatial | self.dialog
        if name not in LEXICON_CATEGORIES:
            raise KeyError(name)
        return getattr(self, name)


def load_lexicon(path) -> KeywordLexicon:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return _lexicon_from_dict(raw)


def _lexicon_from_dict(raw: dict) -> KeywordLexicon:
    missing = [k for k in LEXICON_CATEGORIES if k not in raw]
    if missing:
        raise ValueError(f"lexicon file is missing categories: {missing}")
    return KeywordLexicon(
        colors=frozenset(t.lower() for t in raw["colors"]),
        spatial=frozenset(t.lower() for t in raw["spatial"]),
        dialog=frozenset(t.lower() for t in raw["dialog"]),
    )


def default_lexicon() -> KeywordLexicon:
    data = resources.files("iglu_blocks").joinpath("data/lexicon.json").read_text("utf-8")
    return _lexicon_from_dict(json.loads(data))


def _category_counts(tokens: Sequence[str], terms: frozenset[str]) -> Counter:
    return Counter(t for t in tokens if t in terms)


def _pr_from_counts(cand_kw: Counter, ref_kw: Counter) -> tuple[float | None, float | None]:
    matched = sum((cand_kw & ref_kw).values())
    cand_total = sum(cand_kw.values())
    ref_total = sum(ref_kw.values())
    precision = matched / cand_total if cand_total else None
    recall = matched / ref_total if ref_total else None
    return precision, recall


def keyword_pr(
    candidate: str, reference: str, lexicon: KeywordLexicon | None = None
) -> dict[str, tuple[float | None, float | None]]:
    """Per-category (precision, recall) of keyword tokens for one utterance
    pair, plus an 'all' entry over the union of categories.

    A side with no keyword tokens leaves the corresponding score undefined
    (None) rather than zero.
    """
    lex = lexicon if lexicon is not None else default_lexicon()
    cand = tokenize(candidate)
    ref = tokenize(reference)
    out: dict[str, tuple[float | None, float | None]] = {}
    for name in (*LEXICON_CATEGORIES, "all"):
        terms = lex.category(name)
        out[name] = _pr_from_counts(
            _category_counts(cand, terms), _category_counts(ref, terms)
        )
    return out


def corpus_keyword_pr(
    pairs: Sequence[tuple[str, str]], lexicon: KeywordLexicon | None = None
) -> dict[str, tuple[float | None, float | None]]:
    """Micro-averaged keyword precision/recall over utterance pairs: matched
    and total token counts are pooled across the corpus per category."""
    lex = lexicon if lexicon is not None else default_lexicon()
    names = (*LEXICON_CATEGORIES, "all")
    matched_p = dict.fromkeys(names, 0)
    total_c = dict.fromkeys(names, 0)
    total_r = dict.fromkeys(names, 0)
    for candidate, reference in pairs:
        cand = tokenize(candidate)
        ref = tokenize(reference)
        for name in names:
            terms = lex.category(name)
            cand_kw = _category_counts(cand, terms)
            ref_kw = _category_counts(ref, terms)
            matched_p[name] += sum((cand_kw & ref_kw).values())
            total_c[name] += sum(cand_kw.values())
            total_r[name] += sum(ref_kw.values())
    out: dict[str, tuple[float | None, float | None]] = {}
    for name in names:
        precision = matched_p[name] / total_c[name] if total_c[name] else None
        recall = matched_p[name] / total_r[name] if total_r[name] else None
        out[name] = (precision, recall)
    return out
