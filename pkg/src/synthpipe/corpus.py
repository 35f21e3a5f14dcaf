"""Task datasets: loading, validation, deterministic sampling, persistence."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Iterable, Optional

SPLITS = ("train", "dev", "test", "unlabeled")


class CorpusError(ValueError):
    """Raised for malformed dataset files or invalid dataset operations."""


@dataclass(frozen=True)
class Example:
    """One input-output text pair; output is absent for unlabeled pools."""

    id: str
    input: str
    output: Optional[str] = None

    def __post_init__(self):
        if not self.input.strip():
            raise CorpusError(f"example {self.id!r}: input is empty after trim")

    @property
    def labeled(self) -> bool:
        return self.output is not None


@dataclass(frozen=True)
class TaskSpec:
    """Task identity, prompt prefix, and evaluation mode."""

    task_id: str
    description: str
    kind: str  # "classification" | "generation"
    label_set: Optional[frozenset[str]] = None
    field_template: Optional[tuple[str, ...]] = None  # literal segment tags, e.g. "[CONTEXT]"

    def __post_init__(self):
        if self.kind not in ("classification", "generation"):
            raise CorpusError(f"unknown task kind {self.kind!r}")
        if self.kind == "classification" and not self.label_set:
            raise CorpusError("classification task requires a non-empty label_set")
        if self.label_set is not None:
            object.__setattr__(self, "label_set", frozenset(self.label_set))
        if self.field_template is not None:
            tags = tuple(self.field_template)
            if len(set(tags)) != len(tags):
                raise CorpusError("field_template tags must be distinct")
            object.__setattr__(self, "field_template", tags)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            task_id=d["task_id"],
            description=d["description"],
            kind=d["kind"],
            label_set=frozenset(d["label_set"]) if d.get("label_set") else None,
            field_template=tuple(d["field_template"]) if d.get("field_template") else None,
        )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "description": self.description,
            "kind": self.kind,
            "label_set": sorted(self.label_set) if self.label_set else None,
            "field_template": list(self.field_template) if self.field_template else None,
        }


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of examples for one task split."""

    examples: tuple[Example, ...]
    split: str
    task_id: str

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}")
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)
        if self.split != "unlabeled":
            for ex in self.examples:
                if not ex.labeled:
                    raise CorpusError(
                        f"example {ex.id!r} has no output but split is {self.split!r}"
                    )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def size(self) -> int:
        return len(self.examples)


def round_half_up(fraction: float, n: int) -> int:
    """round(fraction * n) with exact half-up ties, e.g. 0.05 * 2500 -> 125.

    Goes through Decimal on the fraction's shortest decimal repr so that
    grid fractions like 0.285 behave as written, not as binary floats.
    """
    return int((Decimal(str(fraction)) * n).to_integral_value(rounding=ROUND_HALF_UP))


def load_jsonl(path, split: str, task: TaskSpec) -> Dataset:
    """Load a JSONL file of {id, input, output?} records into a Dataset.

    Records missing an id get zero-padded line indices assigned at ingest.
    """
    path = Path(path)
    examples = []
    seen: dict[str, int] = {}
    dup_lines: list[tuple[int, int]] = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {e}") from e
            if not isinstance(rec, dict) or "input" not in rec:
                raise CorpusError(f"{path}:{lineno}: record must be an object with an 'input' field")
            ex_id = rec.get("id")
            if ex_id is None:
                ex_id = f"{lineno - 1:08d}"
            ex_id = str(ex_id)
            if ex_id in seen:
                dup_lines.append((seen[ex_id], lineno))
            seen[ex_id] = lineno
            output = rec.get("output")
            if output is None and split != "unlabeled":
                raise CorpusError(f"{path}:{lineno}: missing output on labeled split {split!r}")
            try:
                examples.append(Example(id=ex_id, input=str(rec["input"]), output=output))
            except CorpusError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from e
    if dup_lines:
        detail = ", ".join(f"lines {a} and {b}" for a, b in dup_lines)
        raise CorpusError(f"{path}: duplicate ids ({detail})")
    return Dataset(examples=tuple(examples), split=split, task_id=task.task_id)


def save_jsonl(ds: Dataset, path) -> None:
    """Write a Dataset back to JSONL; round-trips byte-identically via load_jsonl."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for ex in ds.examples:
            f.write(example_to_json_line(ex))
            f.write("\n")


def example_to_json_line(ex: Example) -> str:
    rec = {"id": ex.id, "input": ex.input}
    if ex.output is not None:
        rec["output"] = ex.output
    return json.dumps(rec, ensure_ascii=False, sort_keys=True)


def sample_fraction(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sample without replacement of round_half_up(fraction * N) examples.

    Deterministic in the seed; relative input order of selected examples
    is preserved.
    """
    if not 0.0 <= fraction <= 1.0:
        raise CorpusError(f"fraction must be in [0, 1], got {fraction}")
    k = round_half_up(fraction, len(ds))
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(ds)), k))
    return Dataset(
        examples=tuple(ds.examples[i] for i in picked),
        split=ds.split,
        task_id=ds.task_id,
    )


OUT_OF_SET = "<out-of-set>"


def label_histogram(ds: Dataset, task: TaskSpec) -> dict[str, int]:
    """Count outputs per label; unknown labels land in the out-of-set bucket."""
    if task.kind != "classification":
        raise CorpusError("label_histogram requires a classification task")
    counts = {label: 0 for label in sorted(task.label_set)}
    counts[OUT_OF_SET] = 0
    for ex in ds.examples:
        if ex.output in task.label_set:
            counts[ex.output] += 1
        else:
            counts[OUT_OF_SET] += 1
    return counts


def subset(ds: Dataset, ids: Iterable[str]) -> Dataset:
    wanted = set(ids)
    return Dataset(
        examples=tuple(ex for ex in ds.examples if ex.id in wanted),
        split=ds.split,
        task_id=ds.task_id,
    )
