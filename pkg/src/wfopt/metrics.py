"""Answer normalization and scoring metrics.

The paperwork here is all string wrangling: a normalizer that makes "3.0",
" 3 " and "\\boxed{3}" compare equal, exact-match accuracy with a
multiple-choice letter rule, and a token-overlap F1 for free-form answers.
"""

from __future__ import annotations

import math
import re
from collections import Counter

_ARTICLES = frozenset({"a", "an", "the"})
_SURROUND = " \t\r\n\"'`.,;:"
_NUM_WITH_COMMAS = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d*)?(?:[eE][+-]?\d+)?$")
_CHOICE = re.compile(r"\b([a-j])\b")


def _unbox(text: str) -> str:
    """Replace every \\boxed{...} with its (balanced) contents."""
    out = text
    while True:
        start = out.find("\\boxed{")
        if start < 0:
            return out
        depth = 0
        end = None
        for i in range(start + len("\\boxed"), len(out)):
            if out[i] == "{":
                depth += 1
            elif out[i] == "}":
                depth -= 1
                if depth == 0:
                    end = i
                    break
        if end is None:
            return out  # unbalanced; leave as-is
        out = out[:start] + out[start + len("\\boxed{") : end] + out[end + 1 :]


def _canonical_number(text: str) -> str | None:
    """Canonical rendering if the text is a number, else None."""
    s = text
    if _NUM_WITH_COMMAS.fullmatch(s):
        s = s.replace(",", "")
    try:
        value = float(s)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def normalize_answer(text: str, *, drop_articles: bool = False) -> str:
    """Canonical comparison form of an answer string.

    Trims, strips surrounding quotes/periods/commas, removes \\boxed{},
    \\left, \\right and \\!, casefolds, collapses whitespace (all of it inside
    LaTeX-ish strings), and renders numbers canonically ("3.0" -> "3",
    "12.50" -> "12.5"). Article dropping is opt-in; equality-style metrics
    keep articles so single-letter answers survive.
    """
    s = str(text)
    s = _unbox(s)
    s = s.replace("\\left", "").replace("\\right", "").replace("\\!", "")
    s = s.strip(_SURROUND)
    s = s.casefold()
    if "\\" in s:
        s = re.sub(r"\s+", "", s)
    else:
        s = re.sub(r"\s+", " ", s)
    number = _canonical_number(s)
    if number is not None:
        return number
    if drop_articles:
        s = " ".join(t for t in s.split() if t not in _ARTICLES)
    return s


def accuracy_score(prediction: str, gold: str) -> float:
    """Exact-match accuracy on normalized strings, in {0.0, 1.0}.

    When the gold answer is a single choice letter A-J, the first standalone
    A-J letter in the prediction decides the match, so predictions like
    "The answer is (B)" score against gold "B".
    """
    pred = normalize_answer(prediction)
    ref = normalize_answer(gold)
    if pred == ref:
        return 1.0
    if re.fullmatch(r"[a-j]", ref):
        found = _CHOICE.search(pred)
        if found:
            return 1.0 if found.group(1) == ref else 0.0
    return 0.0


def token_f1(prediction: str, gold: str) -> float:
    """Harmonic mean of token precision/recall over normalized answers."""
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return 1.0 if pred_tokens == gold_tokens else 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)
