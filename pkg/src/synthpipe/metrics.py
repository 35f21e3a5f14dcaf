"""Rouge-{1,2,L} and classification accuracy."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Example

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(t: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [tok for tok in _TOKEN_SPLIT.split(t.lower()) if tok]


@dataclass(frozen=True)
class Triple:
    precision: float
    recall: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class RougeScore:
    rouge1: Triple
    rouge2: Triple
    rougeL: Triple

    def to_dict(self) -> dict:
        return {
            name: {"p": t.precision, "r": t.recall, "f": t.f1}
            for name, t in (
                ("rouge1", self.rouge1),
                ("rouge2", self.rouge2),
                ("rougeL", self.rougeL),
            )
        }


@dataclass(frozen=True)
class AccuracyReport:
    correct: int
    total: int

    def __post_init__(self):
        if self.correct > self.total:
            raise ValueError("correct cannot exceed total")

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"correct": self.correct, "total": self.total, "accuracy": self.accuracy}


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> Triple:
    """Clipped n-gram overlap precision/recall/F1 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return Triple(0.0, 0.0, 0.0)
    overlap = sum((cand & ref).values())
    p = overlap / cand_total
    r = overlap / ref_total
    return Triple(p, r, _f1(p, r))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Dynamic-programming longest common subsequence length."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> Triple:
    """LCS-based precision/recall/F1 with beta = 1 (plain harmonic mean)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return Triple(0.0, 0.0, 0.0)
    lcs = lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    return Triple(p, r, _f1(p, r))


def rouge_all(candidate: str, reference: str) -> RougeScore:
    return RougeScore(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
    )


def corpus_rouge(pairs: Sequence[tuple[str, str]]) -> RougeScore:
    """Macro average: arithmetic mean of per-pair component scores."""
    if not pairs:
        raise ValueError("corpus_rouge requires at least one (candidate, reference) pair")
    scores = [rouge_all(c, r) for c, r in pairs]

    def mean_triple(triples: list[Triple]) -> Triple:
        k = len(triples)
        return Triple(
            sum(t.precision for t in triples) / k,
            sum(t.recall for t in triples) / k,
            sum(t.f1 for t in triples) / k,
        )

    return RougeScore(
        rouge1=mean_triple([s.rouge1 for s in scores]),
        rouge2=mean_triple([s.rouge2 for s in scores]),
        rougeL=mean_triple([s.rougeL for s in scores]),
    )


def _norm_label(t: str) -> str:
    return re.sub(r"\s+", " ", t.strip()).lower()


def accuracy(
    predictions: Sequence[Example], gold: Sequence[Example], normalize: bool = True
) -> AccuracyReport:
    """Exact-match accuracy over id-aligned prediction/gold sets."""
    pred_by_id = {ex.id: ex for ex in predictions}
    gold_by_id = {ex.id: ex for ex in gold}
    if set(pred_by_id) != set(gold_by_id):
        missing = set(gold_by_id) ^ set(pred_by_id)
        raise ValueError(f"prediction/gold id mismatch on {sorted(missing)[:5]}")
    correct = 0
    for ex_id, pred in pred_by_id.items():
        a, b = pred.output or "", gold_by_id[ex_id].output or ""
        if normalize:
            a, b = _norm_label(a), _norm_label(b)
        if a == b:
            correct += 1
    return AccuracyReport(correct=correct, total=len(gold_by_id))


@dataclass(frozen=True)
class MetricsReport:
    """Either a rouge block or an accuracy block, matching the task kind."""

    kind: str  # classification | generation
    rouge: Optional[RougeScore] = None
    accuracy_report: Optional[AccuracyReport] = None

    def to_dict(self) -> dict:
        if self.kind == "classification":
            return self.accuracy_report.to_dict()
        return self.rouge.to_dict()

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if "accuracy" in d or "correct" in d:
            for key in ("correct", "total"):
                if key not in d:
                    raise ValueError(f"accuracy metrics missing required field {key!r}")
            return cls(
                kind="classification",
                accuracy_report=AccuracyReport(correct=d["correct"], total=d["total"]),
            )
        for key in ("rouge1", "rouge2", "rougeL"):
            if key not in d:
                raise ValueError(f"rouge metrics missing required field {key!r}")
        triples = {}
        for key in ("rouge1", "rouge2", "rougeL"):
            block = d[key]
            for comp in ("p", "r", "f"):
                if comp not in block:
                    raise ValueError(f"rouge metrics missing field {key}.{comp}")
            triples[key] = Triple(block["p"], block["r"], block["f"])
        return cls(
            kind="generation",
            rouge=RougeScore(rouge1=triples["rouge1"], rouge2=triples["rouge2"], rougeL=triples["rougeL"]),
        )

    def headline(self) -> str:
        """Percent with two decimals, like the comparison tables."""
        if self.kind == "classification":
            return f"{100 * self.accuracy_report.accuracy:.2f}"
        s = self.rouge
        return (
            f"R-1 {100 * s.rouge1.f1:.2f} / R-2 {100 * s.rouge2.f1:.2f} / "
            f"R-L {100 * s.rougeL.f1:.2f}"
        )
