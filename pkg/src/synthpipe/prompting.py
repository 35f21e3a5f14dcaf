"""Tagged few-shot prompt rendering and completion parsing.

Prompts use the literal, case-sensitive tags "[INPUT]" and "[OUTPUT]".
Annotation prompts end with a terminal "[OUTPUT]"; generation prompts
end with a terminal "[INPUT]".
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Example, TaskSpec

INPUT_TAG = "[INPUT]"
OUTPUT_TAG = "[OUTPUT]"

MODES = ("annotate", "generate")


class PromptError(ValueError):
    """Invalid inputs to prompt rendering."""


class MalformedCompletion(ValueError):
    """A teacher completion that does not fit the tag grammar; signals resample."""


@dataclass(frozen=True)
class ExemplarPolicy:
    """How many in-prompt exemplars to use and how to pick them."""

    k: int = 8
    selection: str = "seeded-uniform"  # "seeded-uniform" | "fixed-list"
    seed: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise PromptError("exemplar count k must be >= 0")
        if self.selection not in ("seeded-uniform", "fixed-list"):
            raise PromptError(f"unknown exemplar selection {self.selection!r}")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    mode: str
    exemplar_ids: tuple[str, ...]
    prompt_hash: str


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def select_exemplars(
    source: Sequence[Example], policy: ExemplarPolicy, seed: Optional[int] = None
) -> list[Example]:
    """Pick policy.k exemplars; seeded-uniform preserves source order."""
    if policy.k > len(source):
        raise PromptError(
            f"exemplar policy asks for k={policy.k} but source has {len(source)} examples"
        )
    if policy.selection == "fixed-list":
        return list(source[: policy.k])
    rng = random.Random(policy.seed if seed is None else seed)
    picked = sorted(rng.sample(range(len(source)), policy.k))
    return [source[i] for i in picked]


def contains_tag_literal(text: str) -> bool:
    return INPUT_TAG in text or OUTPUT_TAG in text


def render_prompt(
    task: TaskSpec,
    exemplars: Sequence[Example],
    mode: str,
    target: Optional[Example] = None,
) -> RenderedPrompt:
    """Render the tagged few-shot prompt for one teacher call.

    Grammar: description, then "[INPUT] x\\n[OUTPUT] y\\n" per exemplar,
    then for annotate "[INPUT] <target>\\n[OUTPUT]", for generate "[INPUT]".
    """
    if mode not in MODES:
        raise PromptError(f"unknown mode {mode!r}")
    if mode == "annotate":
        if target is None or not target.input.strip():
            raise PromptError("annotate mode requires a target with non-empty input")
    elif target is not None:
        raise PromptError("generate mode takes no target")

    parts = [task.description, "\n"]
    for ex in exemplars:
        if not ex.labeled:
            raise PromptError(f"exemplar {ex.id!r} is unlabeled")
        parts.append(f"{INPUT_TAG} {ex.input}\n{OUTPUT_TAG} {ex.output}\n")
    if mode == "annotate":
        parts.append(f"{INPUT_TAG} {target.input}\n{OUTPUT_TAG}")
    else:
        parts.append(INPUT_TAG)
    text = "".join(parts)
    return RenderedPrompt(
        text=text,
        mode=mode,
        exemplar_ids=tuple(ex.id for ex in exemplars),
        prompt_hash=prompt_hash(text),
    )


def parse_completion(raw: str, mode: str) -> dict:
    """Parse the teacher text that follows the prompt terminal.

    annotate: everything up to the first "[INPUT]" (if any) is the output.
    generate: "<input> [OUTPUT] <output>", output truncated at the next
    "[INPUT]". Both sides whitespace-trimmed.
    """
    if mode not in MODES:
        raise PromptError(f"unknown mode {mode!r}")
    if mode == "annotate":
        cut = raw.find(INPUT_TAG)
        output = (raw[:cut] if cut >= 0 else raw).strip()
        if not output:
            raise MalformedCompletion("annotate completion is empty after trim")
        return {"output": output}

    out_pos = raw.find(OUTPUT_TAG)
    if out_pos < 0:
        raise MalformedCompletion(f"generate completion lacks {OUTPUT_TAG}")
    input_text = raw[:out_pos].strip()
    rest = raw[out_pos + len(OUTPUT_TAG):]
    cut = rest.find(INPUT_TAG)
    output = (rest[:cut] if cut >= 0 else rest).strip()
    if not input_text:
        raise MalformedCompletion("generate completion has empty input")
    if not output:
        raise MalformedCompletion("generate completion has empty output")
    return {"input": input_text, "output": output}
