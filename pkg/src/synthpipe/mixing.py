"""Build augmented training sets from original and synthetic data.

Fractions are relative to the full original train size, so the synthetic
fraction may exceed 1. Synthetic selection is prefix-by-job-order: the 10%
pool is a prefix of the 20% pool, which keeps ablations nested.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import Dataset, Example, round_half_up, sample_fraction
from .seeds import derive_seed
from .synthesis import SyntheticRecord


class MixError(ValueError):
    pass


@dataclass(frozen=True)
class MixPlan:
    original_fraction: float
    synthetic_fraction: float
    base_n: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.original_fraction <= 1.0:
            raise MixError("original_fraction must be in [0, 1]")
        if self.synthetic_fraction < 0:
            raise MixError("synthetic_fraction must be >= 0")
        if self.base_n < 0:
            raise MixError("base_n must be >= 0")

    @property
    def original_count(self) -> int:
        return round_half_up(self.original_fraction, self.base_n)

    @property
    def synthetic_count(self) -> int:
        return round_half_up(self.synthetic_fraction, self.base_n)

    @classmethod
    def from_dict(cls, d: dict) -> "MixPlan":
        return cls(
            original_fraction=d["original_fraction"],
            synthetic_fraction=d["synthetic_fraction"],
            base_n=d["base_n"],
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class AugmentedDataset:
    examples: tuple[Example, ...]
    n_original: int
    n_synthetic: int
    plan: MixPlan
    source_digests: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_original + self.n_synthetic != len(self.examples):
            raise MixError("composition counts do not add up to the example count")

    def __len__(self):
        return len(self.examples)


def _digest(parts: Sequence[str]) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def build_augmented(
    original: Dataset,
    synthetic: Sequence[SyntheticRecord],
    plan: MixPlan,
    sample_original: bool = False,
    keep_markers: bool = False,
) -> AugmentedDataset:
    """Concatenate the original subset with a synthetic prefix, then shuffle once.

    `original` must already have plan.original_count examples, or be the full
    base set with sample_original=True. With keep_markers, synthetic example
    ids carry a "syn:" prefix for debugging; off by default since the student
    trains on the plain union.
    """
    n_o = plan.original_count
    n_s = plan.synthetic_count
    if len(original) != n_o:
        if sample_original:
            if len(original) != plan.base_n:
                raise MixError(
                    f"original has {len(original)} examples; expected base_n={plan.base_n} "
                    f"to sample from, or exactly {n_o}"
                )
            original = sample_fraction(
                original, plan.original_fraction, derive_seed(plan.seed, "mix", "original")
            )
        else:
            raise MixError(
                f"original has {len(original)} examples but plan requires {n_o}"
            )
    if n_s > len(synthetic):
        raise MixError(
            f"synthetic pool has {len(synthetic)} records; plan requires {n_s} "
            f"(shortfall {n_s - len(synthetic)})"
        )

    selected = list(synthetic)[:n_s]
    marker = "syn:" if keep_markers else ""
    syn_examples = [
        Example(id=f"{marker}{rec.mode}-{i:08d}", input=rec.input, output=rec.output)
        for i, rec in enumerate(selected)
    ]
    combined = list(original.examples) + syn_examples
    rng = random.Random(derive_seed(plan.seed, "mix", "shuffle"))
    rng.shuffle(combined)

    digests = (
        _digest([ex.id + "\x1f" + ex.input for ex in original.examples]),
        _digest([rec.prompt_hash for rec in selected]),
    )
    return AugmentedDataset(
        examples=tuple(combined),
        n_original=len(original),
        n_synthetic=len(syn_examples),
        plan=plan,
        source_digests=digests,
    )


def _pct(count: int, base: int) -> str:
    if base == 0:
        return "0%"
    exact = 100.0 * count / base
    # print on the whole-percent grid when the count round-trips exactly
    grid = round(exact)
    if round_half_up(grid / 100.0, base) == count:
        return f"{grid}%"
    return f"{exact:.2f}%"


def composition_report(a: AugmentedDataset) -> str:
    """Human-readable original/synthetic composition, fractions and counts."""
    base = a.plan.base_n
    return (
        f"original {_pct(a.n_original, base)} ({a.n_original}) / "
        f"synthetic {_pct(a.n_synthetic, base)} ({a.n_synthetic}) of base N={base}"
    )


def to_dataset(a: AugmentedDataset, task_id: str) -> Dataset:
    return Dataset(examples=a.examples, split="train", task_id=task_id)


def save_provenance(a: AugmentedDataset, path) -> None:
    """Sidecar provenance for a persisted augmented dataset."""
    doc = {
        "plan": {
            "original_fraction": a.plan.original_fraction,
            "synthetic_fraction": a.plan.synthetic_fraction,
            "base_n": a.plan.base_n,
            "seed": a.plan.seed,
        },
        "composition": {"original": a.n_original, "synthetic": a.n_synthetic},
        "source_digests": list(a.source_digests),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
