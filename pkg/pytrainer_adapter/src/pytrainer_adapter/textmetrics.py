"""Self-contained metrics matching the pipeline's metrics.json schema."""

from __future__ import annotations

import re
from collections import Counter
from typing import Sequence

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(t: str) -> list[str]:
    return [tok for tok in _TOKEN_SPLIT.split(t.lower()) if tok]


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _rouge_n(cand: list[str], ref: list[str], n: int) -> tuple[float, float, float]:
    cand_grams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    cand_total, ref_total = sum(cand_grams.values()), sum(ref_grams.values())
    if cand_total == 0 or ref_total == 0:
        return (0.0, 0.0, 0.0)
    overlap = sum((cand_grams & ref_grams).values())
    p, r = overlap / cand_total, overlap / ref_total
    return (p, r, _f1(p, r))


def _lcs(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def _rouge_l(cand: list[str], ref: list[str]) -> tuple[float, float, float]:
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    lcs = _lcs(cand, ref)
    p, r = lcs / len(cand), lcs / len(ref)
    return (p, r, _f1(p, r))


def rouge_block(pairs: Sequence[tuple[str, str]]) -> dict:
    """Macro-averaged rouge1/rouge2/rougeL dict, one {p,r,f} block each."""
    if not pairs:
        raise ValueError("rouge needs at least one (candidate, reference) pair")
    sums = {key: [0.0, 0.0, 0.0] for key in ("rouge1", "rouge2", "rougeL")}
    for cand_text, ref_text in pairs:
        cand, ref = tokenize(cand_text), tokenize(ref_text)
        for key, triple in (
            ("rouge1", _rouge_n(cand, ref, 1)),
            ("rouge2", _rouge_n(cand, ref, 2)),
            ("rougeL", _rouge_l(cand, ref)),
        ):
            for i in range(3):
                sums[key][i] += triple[i]
    k = len(pairs)
    return {
        key: {"p": total[0] / k, "r": total[1] / k, "f": total[2] / k}
        for key, total in sums.items()
    }


def accuracy_block(predictions: Sequence[str], gold: Sequence[str]) -> dict:
    if len(predictions) != len(gold):
        raise ValueError("prediction/gold length mismatch")
    norm = lambda t: re.sub(r"\s+", " ", t.strip()).lower()
    correct = sum(norm(p) == norm(g) for p, g in zip(predictions, gold))
    return {"correct": correct, "total": len(gold),
            "accuracy": correct / len(gold) if gold else 0.0}
