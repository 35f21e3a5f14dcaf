"""Contract to external student trainers, plus a trivial built-in baseline.

The core never fine-tunes anything itself: a trainer is a subprocess that
receives train/dev/test files and writes {out}/metrics.json. The baseline
student (token-overlap nearest neighbor) closes the loop at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import Dataset, Example, save_jsonl
from .metrics import MetricsReport, accuracy, corpus_rouge, tokenize
from .mixing import AugmentedDataset, to_dataset
from .corpus import TaskSpec

PLACEHOLDERS = ("{train}", "{dev}", "{test}", "{out}")

# Student hyperparameters carried in the task card as adapter defaults.
CLASSIFICATION_DEFAULTS = {
    "optimizer": "adam",
    "epochs": 320,
    "batch_size": 50,
    "learning_rate": 1e-5,
    "schedule": "constant",
    "selection": "best-validation-loss",
}
GENERATION_DEFAULTS = {
    "optimizer": "adam",
    "epochs": 5,
    "batch_size": 32,
    "learning_rate": 5e-5,
    "schedule": "linear",
    "selection": "best-validation-loss",
}


class TrainerFailed(RuntimeError):
    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class TrainerTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainerContract:
    command: tuple[str, ...]  # argv template with {train},{dev},{test},{out}
    workdir: Optional[str] = None
    timeout: float = 3600.0
    expected_metrics: str = "accuracy"  # accuracy | rouge
    trainer_id: str = "external"

    def __post_init__(self):
        object.__setattr__(self, "command", tuple(self.command))
        joined = " ".join(self.command)
        for ph in PLACEHOLDERS:
            if ph not in joined:
                raise ValueError(f"trainer command lacks placeholder {ph}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerContract":
        return cls(
            command=tuple(d["command"]),
            workdir=d.get("workdir"),
            timeout=d.get("timeout", 3600.0),
            expected_metrics=d.get("expected_metrics", "accuracy"),
            trainer_id=d.get("trainer_id", "external"),
        )


@dataclass(frozen=True)
class StudentResult:
    dev_metrics: MetricsReport
    test_metrics: MetricsReport
    wall_time: float
    trainer_id: str


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_training_set(
    a: AugmentedDataset, dev: Dataset, test: Dataset, out_dir, task: TaskSpec
) -> dict:
    """Write train/dev/test JSONL and a task card; returns the file manifest.

    Byte-stable: identical inputs produce identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds = to_dataset(a, task.task_id)
    files = {}
    for name, ds in (("train", train_ds), ("dev", dev), ("test", test)):
        path = out_dir / f"{name}.jsonl"
        save_jsonl(ds, path)
        files[name] = str(path)

    card = {
        "task": task.to_dict(),
        "composition": {"original": a.n_original, "synthetic": a.n_synthetic},
        "hyperparameters": (
            CLASSIFICATION_DEFAULTS if task.kind == "classification" else GENERATION_DEFAULTS
        ),
    }
    card_path = out_dir / "task_card.json"
    card_path.write_text(json.dumps(card, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files["task_card"] = str(card_path)
    return {
        "files": files,
        "digests": {name: _file_digest(Path(p)) for name, p in files.items()},
    }


def invoke_trainer(contract: TrainerContract, manifest: dict, out_dir) -> StudentResult:
    """Run the trainer subprocess and parse {out}/metrics.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subst = {
        "{train}": manifest["files"]["train"],
        "{dev}": manifest["files"]["dev"],
        "{test}": manifest["files"]["test"],
        "{out}": str(out_dir),
    }
    argv = [_substitute(arg, subst) for arg in contract.command]
    start = time.monotonic()
    try:
        proc = subprocess.run(
            argv,
            cwd=contract.workdir,
            capture_output=True,
            text=True,
            timeout=contract.timeout,
        )
    except subprocess.TimeoutExpired as e:
        raise TrainerTimeout(f"trainer exceeded {contract.timeout}s") from e
    wall = time.monotonic() - start
    if proc.returncode != 0:
        raise TrainerFailed(
            f"trainer exited {proc.returncode}", stderr=proc.stderr
        )
    metrics_path = out_dir / "metrics.json"
    if not metrics_path.exists():
        raise TrainerFailed(f"trainer wrote no {metrics_path}")
    doc = json.loads(metrics_path.read_text(encoding="utf-8"))
    for split in ("dev", "test"):
        if split not in doc:
            raise ValueError(f"metrics.json missing required field {split!r}")
    return StudentResult(
        dev_metrics=MetricsReport.from_dict(doc["dev"]),
        test_metrics=MetricsReport.from_dict(doc["test"]),
        wall_time=wall,
        trainer_id=contract.trainer_id,
    )


def _substitute(arg: str, subst: dict) -> str:
    for ph, value in subst.items():
        arg = arg.replace(ph, value)
    return arg


def nearest_neighbor_predict(train: Dataset, inputs: list[Example]) -> list[Example]:
    """Predict each input's output as that of the nearest training input.

    Similarity is Jaccard over tokenize(); ties break to the earliest
    training index, so predictions are deterministic and duplicates inert.
    """
    if len(train) == 0:
        raise ValueError("baseline student needs a non-empty training set")
    train_tokens = [(set(tokenize(ex.input)), ex.output) for ex in train.examples]
    predictions = []
    for item in inputs:
        toks = set(tokenize(item.input))
        best_score, best_output = -1.0, None
        for cand_toks, cand_output in train_tokens:
            union = len(toks | cand_toks)
            score = (len(toks & cand_toks) / union) if union else 0.0
            if score > best_score:
                best_score, best_output = score, cand_output
        predictions.append(Example(id=item.id, input=item.input, output=best_output))
    return predictions


def baseline_student(train: Dataset, eval_ds: Dataset, task: TaskSpec) -> MetricsReport:
    """Evaluate the nearest-neighbor baseline on one split."""
    predictions = nearest_neighbor_predict(train, list(eval_ds.examples))
    if task.kind == "classification":
        return MetricsReport(
            kind="classification",
            accuracy_report=accuracy(predictions, list(eval_ds.examples)),
        )
    pairs = [
        (pred.output or "", gold.output or "")
        for pred, gold in zip(predictions, eval_ds.examples)
    ]
    return MetricsReport(kind="generation", rouge=corpus_rouge(pairs))
