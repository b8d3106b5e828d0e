"""Prompt restructuring: split into phrases, order them by importance."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .embedding import tokenize
from .errors import EmptyPrompt

# conjunctions split on word boundaries so a phrase can never start or end with one
_DELIMS = re.compile(r",|;|\b(?:and|with)\b", re.IGNORECASE)


@dataclass(frozen=True)
class PhraseWeight:
    phrase: str
    weight: float
    original_index: int


class ImportanceScorer(Protocol):
    def score(self, phrases: Sequence[str]) -> list[float]: ...


@lru_cache(maxsize=None)
def _packaged_stopwords() -> frozenset[str]:
    text = resources.files(__package__).joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def load_stopwords(path=None) -> frozenset[str]:
    """One token per line; the packaged list when ``path`` is None."""
    if path is None:
        return _packaged_stopwords()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(w.strip().lower() for w in lines if w.strip())


class ContentTokenScorer:
    """Weight of a phrase = number of its tokens outside the stop-word list."""

    def __init__(self, stopwords: frozenset[str] | None = None):
        self.stopwords = load_stopwords() if stopwords is None else stopwords

    def score(self, phrases):
        return [float(sum(tok not in self.stopwords for tok in tokenize(p))) for p in phrases]


def split_phrases(prompt: str) -> list[str]:
    if not prompt or not prompt.strip():
        raise EmptyPrompt("prompt is empty")
    phrases = [p.strip() for p in _DELIMS.split(prompt)]
    phrases = [p for p in phrases if p]
    if not phrases:
        raise EmptyPrompt(f"prompt {prompt!r} has no phrases")
    return phrases


def weigh(prompt: str, scorer: ImportanceScorer | None = None) -> list[PhraseWeight]:
    phrases = split_phrases(prompt)
    weights = (scorer or ContentTokenScorer()).score(phrases)
    if len(weights) != len(phrases):
        raise ValueError(f"scorer returned {len(weights)} weights for {len(phrases)} phrases")
    return [PhraseWeight(p, float(w), i) for i, (p, w) in enumerate(zip(phrases, weights))]


def restructure(prompt: str, scorer: ImportanceScorer | None = None) -> str:
    """Heaviest phrases first; equal weights keep their original order."""
    ranked = sorted(weigh(prompt, scorer), key=lambda pw: -pw.weight)
    return ", ".join(pw.phrase for pw in ranked)
