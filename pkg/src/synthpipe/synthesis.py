"""Annotation and generation runs against a teacher backend.

Each job renders a prompt, requests a completion, parses and validates it,
and resamples on failure with a bumped per-attempt sub-seed. Invalid items
are dropped with a diagnostic, never silently imputed.
"""

from __future__ import annotations

import json
import random
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .backend import (
    Backend,
    BackendConfig,
    BackendUnavailable,
    CompletionRequest,
    default_max_tokens,
    default_temperature,
    make_backend,
)
from .corpus import Dataset, Example, TaskSpec
from .prompting import (
    ExemplarPolicy,
    MalformedCompletion,
    contains_tag_literal,
    parse_completion,
    render_prompt,
    select_exemplars,
)
from .seeds import derive_seed

_WS_RUN = re.compile(r"\s+")
_TRAILING_PUNCT = re.compile(r"[.!?,;:]+$")


class SynthesisError(ValueError):
    pass


def normalize_for_dedup(t: str) -> str:
    """Lowercase, trim, collapse internal whitespace runs to single spaces."""
    return _WS_RUN.sub(" ", t.strip()).lower()


def validate_label(output: str, task: TaskSpec) -> Optional[str]:
    """Map a raw completion to a canonical label, or None if out of set.

    Near-misses ("Yes." vs "yes") are normalized before rejection.
    """
    if task.kind != "classification":
        return output
    canon = {normalize_for_dedup(label): label for label in task.label_set}
    norm = _TRAILING_PUNCT.sub("", normalize_for_dedup(output))
    return canon.get(norm)


@dataclass(frozen=True)
class SynthesisPlan:
    mode: str  # annotate | generate | combine
    target_count: int = 0
    annotate_count: Optional[int] = None  # combine only
    generate_count: Optional[int] = None
    temperature: Optional[float] = None  # None = mode default
    exemplar_policy: ExemplarPolicy = field(default_factory=ExemplarPolicy)
    max_resamples: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("annotate", "generate", "combine"):
            raise SynthesisError(f"unknown synthesis mode {self.mode!r}")
        if self.target_count < 0 or self.max_resamples < 0:
            raise SynthesisError("target_count and max_resamples must be >= 0")
        if self.mode == "combine":
            a, g = self.annotate_count, self.generate_count
            if a is None or g is None or a < 0 or g < 0:
                raise SynthesisError("combine mode requires per-mode counts >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisPlan":
        policy = ExemplarPolicy(**d["exemplar_policy"]) if "exemplar_policy" in d else ExemplarPolicy()
        return cls(
            mode=d["mode"],
            target_count=d.get("target_count", 0),
            annotate_count=d.get("annotate_count"),
            generate_count=d.get("generate_count"),
            temperature=d.get("temperature"),
            exemplar_policy=policy,
            max_resamples=d.get("max_resamples", 2),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class SyntheticRecord:
    input: str
    output: str
    mode: str
    teacher: str
    temperature: float
    prompt_hash: str
    job_index: int
    seed: int
    source_id: Optional[str] = None  # annotate only
    exemplar_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {
            "input": self.input,
            "output": self.output,
            "mode": self.mode,
            "teacher": self.teacher,
            "temperature": self.temperature,
            "prompt_hash": self.prompt_hash,
            "job_index": self.job_index,
            "seed": self.seed,
            "exemplar_ids": list(self.exemplar_ids),
        }
        if self.source_id is not None:
            d["source_id"] = self.source_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticRecord":
        return cls(
            input=d["input"],
            output=d["output"],
            mode=d["mode"],
            teacher=d["teacher"],
            temperature=d["temperature"],
            prompt_hash=d["prompt_hash"],
            job_index=d["job_index"],
            seed=d["seed"],
            source_id=d.get("source_id"),
            exemplar_ids=tuple(d.get("exemplar_ids", ())),
        )


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # dropped | shortfall
    mode: str
    job_index: int
    attempts: int
    detail: str


@dataclass
class SynthesisResult:
    records: list[SyntheticRecord]
    diagnostics: list[Diagnostic]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def save_records(records: Sequence[SyntheticRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def load_records(path) -> list[SyntheticRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(SyntheticRecord.from_dict(json.loads(line)))
    return records


# Hallucination/factuality filtering hook; default passes everything.
RecordFilter = Callable[[SyntheticRecord], bool]

BackendLike = Union[BackendConfig, Backend]


def _as_backend(b: BackendLike) -> Backend:
    return b if isinstance(b, Backend) else make_backend(b)


def _pass_all(rec: SyntheticRecord) -> bool:
    return True


class _Checkpoint:
    """Append-only record log keyed by (mode, job_index); serialized writes."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self.done: dict[tuple[str, int], SyntheticRecord] = {}
        if self.path and self.path.exists():
            for rec in load_records(self.path):
                self.done[(rec.mode, rec.job_index)] = rec

    def add(self, rec: SyntheticRecord) -> None:
        with self._lock:
            self.done[(rec.mode, rec.job_index)] = rec
            if self.path:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True))
                    f.write("\n")


def _reject_tag_literals(examples, what: str) -> None:
    for ex in examples:
        if contains_tag_literal(ex.input) or (ex.output and contains_tag_literal(ex.output)):
            raise SynthesisError(
                f"{what} {ex.id!r} contains a prompt tag literal; refusing to render"
            )


def _synthesize_one(
    plan: SynthesisPlan,
    mode: str,
    job_index: int,
    backend: Backend,
    task: TaskSpec,
    exemplar_source: Sequence[Example],
    target: Optional[Example],
    accept: Callable[[dict], Optional[str]],
) -> tuple[Optional[SyntheticRecord], int, str]:
    """One job with resamples. Returns (record or None, attempts, last failure)."""
    temperature = plan.temperature if plan.temperature is not None else default_temperature(mode)
    last_failure = ""
    attempts = 0
    for attempt in range(plan.max_resamples + 1):
        attempts = attempt + 1
        exemplar_seed = derive_seed(plan.seed, mode, "exemplars", job_index, attempt)
        exemplars = select_exemplars(exemplar_source, plan.exemplar_policy, seed=exemplar_seed)
        prompt = render_prompt(task, exemplars, mode, target=target)
        req = CompletionRequest(
            prompt=prompt.text,
            temperature=temperature,
            max_tokens=default_max_tokens(task.kind),
            request_id=f"{mode}-{job_index}-r{attempt}",
        )
        try:
            text, _usage = backend.complete(req)
            parsed = parse_completion(text, mode)
        except MalformedCompletion as e:
            last_failure = str(e)
            continue
        failure = accept(parsed)
        if failure is not None:
            last_failure = failure
            continue
        output = parsed["output"]
        if task.kind == "classification":
            output = validate_label(output, task)  # accept() guaranteed non-None
        return (
            SyntheticRecord(
                input=target.input if mode == "annotate" else parsed["input"],
                output=output,
                mode=mode,
                teacher=backend.cfg.model_name,
                temperature=temperature,
                prompt_hash=prompt.prompt_hash,
                job_index=job_index,
                seed=plan.seed,
                source_id=target.id if mode == "annotate" else None,
                exemplar_ids=prompt.exemplar_ids,
            ),
            attempts,
            "",
        )
    return None, attempts, last_failure


def run_annotation(
    plan: SynthesisPlan,
    pool: Dataset,
    task: TaskSpec,
    backend_cfg: BackendLike,
    exemplar_source: Dataset,
    record_filter: RecordFilter = _pass_all,
    checkpoint_path=None,
) -> SynthesisResult:
    """Annotate plan.target_count pool items with teacher outputs."""
    if len(pool) == 0:
        raise SynthesisError("annotation pool is empty")
    m = plan.target_count
    if m > len(pool):
        raise SynthesisError(f"target_count {m} exceeds pool size {len(pool)}")
    _reject_tag_literals(exemplar_source, "exemplar")

    rng_seed = derive_seed(plan.seed, "annotate", "pool")
    picked = sorted(random.Random(rng_seed).sample(range(len(pool)), m))
    targets = [pool.examples[i] for i in picked]
    _reject_tag_literals(targets, "pool item")

    backend = _as_backend(backend_cfg)
    checkpoint = _Checkpoint(checkpoint_path)

    def accept(parsed: dict) -> Optional[str]:
        if task.kind == "classification" and validate_label(parsed["output"], task) is None:
            return f"output {parsed['output'][:80]!r} not in label set"
        return None

    diagnostics: list[Diagnostic] = []
    results: dict[int, Optional[tuple]] = {}
    abort: list[BackendUnavailable] = []

    def job(job_index: int, target: Example):
        if ("annotate", job_index) in checkpoint.done:
            results[job_index] = (checkpoint.done[("annotate", job_index)], 0, "")
            return
        try:
            rec, attempts, failure = _synthesize_one(
                plan, "annotate", job_index, backend, task, exemplar_source.examples, target, accept
            )
        except BackendUnavailable as e:
            abort.append(e)
            return
        if rec is not None:
            checkpoint.add(rec)
        results[job_index] = (rec, attempts, failure)

    with ThreadPoolExecutor(max_workers=max(1, backend.cfg.parallelism)) as pool_exec:
        futures = [pool_exec.submit(job, i, t) for i, t in enumerate(targets)]
        for fut in futures:
            fut.result()
    if abort:
        raise BackendUnavailable(
            f"annotation aborted; checkpoint holds {len(checkpoint.done)} completed jobs: {abort[0]}"
        )

    records: list[SyntheticRecord] = []
    for job_index in sorted(results):
        rec, attempts, failure = results[job_index]
        if rec is None:
            diagnostics.append(
                Diagnostic("dropped", "annotate", job_index, attempts, failure)
            )
        elif record_filter(rec):
            records.append(rec)
    return SynthesisResult(records, diagnostics)


def run_generation(
    plan: SynthesisPlan,
    exemplar_source: Dataset,
    task: TaskSpec,
    backend_cfg: BackendLike,
    record_filter: RecordFilter = _pass_all,
    checkpoint_path=None,
) -> SynthesisResult:
    """Generate plan.target_count new input-output pairs, deduplicated.

    Jobs run sequentially: dedup decisions depend on earlier accepted records.
    """
    if plan.exemplar_policy.k > sum(1 for ex in exemplar_source if ex.labeled):
        raise SynthesisError("exemplar source smaller than exemplar_policy.k")
    _reject_tag_literals(exemplar_source, "exemplar")

    backend = _as_backend(backend_cfg)
    checkpoint = _Checkpoint(checkpoint_path)
    seen_inputs = {normalize_for_dedup(ex.input) for ex in exemplar_source}
    for rec in checkpoint.done.values():
        seen_inputs.add(normalize_for_dedup(rec.input))

    records: list[SyntheticRecord] = []
    diagnostics: list[Diagnostic] = []

    for job_index in range(plan.target_count):
        cached = checkpoint.done.get(("generate", job_index))
        if cached is not None:
            records.append(cached)
            continue

        def accept(parsed: dict) -> Optional[str]:
            if contains_tag_literal(parsed["input"]) or contains_tag_literal(parsed["output"]):
                return "generated fields contain prompt tag literals"
            if task.kind == "classification" and validate_label(parsed["output"], task) is None:
                return f"output {parsed['output'][:80]!r} not in label set"
            if normalize_for_dedup(parsed["input"]) in seen_inputs:
                return f"duplicate input {parsed['input'][:80]!r}"
            return None

        try:
            rec, attempts, failure = _synthesize_one(
                plan, "generate", job_index, backend, task, exemplar_source.examples, None, accept
            )
        except BackendUnavailable as e:
            raise BackendUnavailable(
                f"generation aborted at job {job_index}; checkpoint holds "
                f"{len(checkpoint.done)} completed jobs: {e}"
            ) from e
        if rec is None:
            diagnostics.append(Diagnostic("dropped", "generate", job_index, attempts, failure))
            continue
        seen_inputs.add(normalize_for_dedup(rec.input))
        checkpoint.add(rec)
        if record_filter(rec):
            records.append(rec)

    if len(records) < plan.target_count:
        diagnostics.append(
            Diagnostic(
                "shortfall",
                "generate",
                -1,
                0,
                f"wanted {plan.target_count} records, produced {len(records)} "
                f"(shortfall {plan.target_count - len(records)})",
            )
        )
    return SynthesisResult(records, diagnostics)


def run_combine(
    plan: SynthesisPlan,
    pool: Dataset,
    exemplar_source: Dataset,
    task: TaskSpec,
    backend_cfg: BackendLike,
    record_filter: RecordFilter = _pass_all,
    checkpoint_path=None,
) -> SynthesisResult:
    """Annotation records followed by generation records, counts honored per mode."""
    ann = run_annotation(
        replace(plan, mode="annotate", target_count=plan.annotate_count),
        pool,
        task,
        backend_cfg,
        exemplar_source,
        record_filter=record_filter,
        checkpoint_path=checkpoint_path,
    ) if plan.annotate_count else SynthesisResult([], [])
    gen = run_generation(
        replace(plan, mode="generate", target_count=plan.generate_count),
        exemplar_source,
        task,
        backend_cfg,
        record_filter=record_filter,
        checkpoint_path=checkpoint_path,
    ) if plan.generate_count else SynthesisResult([], [])
    return SynthesisResult(ann.records + gen.records, ann.diagnostics + gen.diagnostics)
