import json
import random

import pytest

from synthpipe.corpus import Dataset, Example, TaskSpec


@pytest.fixture
def bool_task():
    return TaskSpec(
        task_id="boolq-toy",
        description="Answer the question with yes or no.",
        kind="classification",
        label_set=frozenset({"yes", "no"}),
    )


@pytest.fixture
def gen_task():
    return TaskSpec(
        task_id="dialog-toy",
        description="Write the assistant's next utterance.",
        kind="generation",
    )


def make_dataset(n, split="train", task_id="toy", labeled=True, prefix="ex", rng=None):
    rng = rng or random.Random(0)
    words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]
    examples = []
    for i in range(n):
        text = " ".join(rng.choice(words) for _ in range(4)) + f" {prefix}{i}"
        out = f"out {i}" if labeled else None
        examples.append(Example(id=f"{prefix}{i}", input=text, output=out))
    return Dataset(examples=tuple(examples), split=split, task_id=task_id)


@pytest.fixture
def train10():
    return make_dataset(10)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
