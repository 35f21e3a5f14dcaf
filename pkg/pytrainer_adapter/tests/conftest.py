import json
import random

import pytest

CLASSIFICATION_HP = {
    "optimizer": "adam",
    "epochs": 320,
    "batch_size": 50,
    "learning_rate": 1e-5,
    "schedule": "constant",
    "selection": "best-validation-loss",
}
GENERATION_HP = {
    "optimizer": "adam",
    "epochs": 5,
    "batch_size": 32,
    "learning_rate": 5e-5,
    "schedule": "linear",
    "selection": "best-validation-loss",
}


def write_rows(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def make_export(root, kind, n_train=50, n_dev=10, n_test=10):
    """Write a toy export directory: train/dev/test.jsonl plus task_card.json."""
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(99)
    words = ["alpha", "beta", "gamma", "delta", "omega", "sigma"]

    def rows(n, prefix):
        out = []
        for i in range(n):
            k = rng.randint(2, 5)
            text = " ".join(rng.choice(words) for _ in range(k)) + f" {prefix}{i}"
            if kind == "classification":
                label = "yes" if k % 2 == 0 else "no"
            else:
                label = f"reply about {text.split()[0]}"
            out.append({"id": f"{prefix}{i}", "input": text, "output": label})
        return out

    paths = {}
    for name, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        paths[name] = root / f"{name}.jsonl"
        write_rows(paths[name], rows(n, name[0]))

    card = {
        "task": {
            "task_id": f"toy-{kind}",
            "description": "toy task",
            "kind": kind,
            "label_set": ["no", "yes"] if kind == "classification" else None,
            "field_template": None,
        },
        "composition": {"original": n_train, "synthetic": 0},
        "hyperparameters": CLASSIFICATION_HP if kind == "classification" else GENERATION_HP,
    }
    paths["task_card"] = root / "task_card.json"
    paths["task_card"].write_text(json.dumps(card, indent=2, sort_keys=True) + "\n")
    return paths


@pytest.fixture
def classification_export(tmp_path):
    return make_export(tmp_path / "export", "classification")


@pytest.fixture
def generation_export(tmp_path):
    return make_export(tmp_path / "export", "generation")
