"""Export-schema loading and validation."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema


class SchemaError(ValueError):
    pass


TASK_CARD_SCHEMA = {
    "type": "object",
    "required": ["task", "hyperparameters"],
    "properties": {
        "task": {
            "type": "object",
            "required": ["task_id", "kind"],
            "properties": {
                "task_id": {"type": "string"},
                "kind": {"enum": ["classification", "generation"]},
                "label_set": {"type": ["array", "null"], "items": {"type": "string"}},
            },
        },
        "hyperparameters": {
            "type": "object",
            "required": ["epochs", "batch_size", "learning_rate"],
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "schedule": {"type": "string"},
            },
        },
    },
}


def load_task_card(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"task card not found: {path}")
    try:
        card = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise SchemaError(f"{path}: not valid JSON: {e}") from e
    try:
        jsonschema.validate(card, TASK_CARD_SCHEMA)
    except jsonschema.ValidationError as e:
        raise SchemaError(f"{path}: {e.message}") from e
    if card["task"]["kind"] == "classification" and not card["task"].get("label_set"):
        raise SchemaError(f"{path}: classification task card must list label_set")
    return card


def load_split(path, name: str) -> list[dict]:
    """Load one labeled JSONL split; every row needs id, input, output."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{name} file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except ValueError as e:
                raise SchemaError(f"{path}:{lineno}: not valid JSON: {e}") from e
            if not isinstance(row, dict):
                raise SchemaError(f"{path}:{lineno}: row must be an object")
            for key in ("id", "input", "output"):
                if key not in row:
                    raise SchemaError(f"{path}:{lineno}: row missing {key!r}")
            rows.append({"id": str(row["id"]), "input": str(row["input"]),
                         "output": str(row["output"])})
    if not rows:
        raise SchemaError(f"{path}: {name} split is empty")
    return rows
