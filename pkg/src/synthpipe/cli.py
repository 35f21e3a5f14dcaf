"""Manifest-driven command line: run the whole pipeline or single stages.

Exit codes: 0 success, 2 validation error, 3 backend failure, 4 trainer
failure. All randomness derives from the manifest seed via labeled
sub-seeds, so re-running a manifest with mock backends reproduces every
artifact byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click

from . import synthesis
from .backend import BackendConfig, BackendError, BackendUnavailable, make_backend
from .corpus import (
    CorpusError,
    Dataset,
    TaskSpec,
    label_histogram,
    load_jsonl,
    sample_fraction,
    save_jsonl,
)
from .metrics import MetricsReport, accuracy, corpus_rouge
from .mixing import (
    AugmentedDataset,
    MixPlan,
    build_augmented,
    composition_report,
    save_provenance,
    to_dataset,
)
from .seeds import derive_seed
from .synthesis import (
    SynthesisError,
    SynthesisPlan,
    load_records,
    run_annotation,
    run_combine,
    run_generation,
    save_records,
)
from .trainer_bridge import (
    TrainerContract,
    TrainerFailed,
    TrainerTimeout,
    baseline_student,
    export_training_set,
    invoke_trainer,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_TRAINER = 4


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    seed: int
    task: TaskSpec
    data: dict  # split -> path
    backend: BackendConfig
    plan: SynthesisPlan
    mix: dict  # original_fraction, synthetic_fraction, optional base_n
    output_dir: Path
    trainer: Optional[TrainerContract] = None

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ManifestError(f"cannot read manifest {path}: {e}") from e
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported schema_version {version!r}")
        if "seed" not in doc:
            raise ManifestError("manifest must set an integer seed")
        try:
            task = TaskSpec.from_dict(doc["task"])
            backend = BackendConfig.from_dict(doc["backend"])
            plan = SynthesisPlan.from_dict(doc["plan"])
            trainer = TrainerContract.from_dict(doc["trainer"]) if doc.get("trainer") else None
        except (KeyError, ValueError, TypeError) as e:
            raise ManifestError(f"invalid manifest: {e}") from e
        data = doc.get("data", {})
        if "train" not in data:
            raise ManifestError("manifest data section must name a train file")
        for split, p in data.items():
            if not Path(p).exists():
                raise ManifestError(f"dataset path for {split!r} does not exist: {p}")
        mix = doc.get("mix")
        if not mix or "original_fraction" not in mix or "synthetic_fraction" not in mix:
            raise ManifestError("manifest must set mix.original_fraction and mix.synthetic_fraction")
        if plan.mode in ("annotate", "combine") and "unlabeled" not in data:
            raise ManifestError(f"{plan.mode} mode requires a data.unlabeled pool file")
        out = doc.get("output_dir")
        if not out:
            raise ManifestError("manifest must set output_dir")
        return cls(
            seed=int(doc["seed"]),
            task=task,
            data=data,
            backend=backend,
            plan=plan,
            mix=dict(mix),
            output_dir=Path(out),
            trainer=trainer,
        )


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_task(path) -> TaskSpec:
    return TaskSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cmd_run(manifest_path, resume: bool = False, dry_run: bool = False,
            seed_override: Optional[int] = None) -> dict:
    """Execute sample -> synthesize -> mix -> export -> train -> evaluate."""
    manifest = RunManifest.load(manifest_path)
    seed = manifest.seed if seed_override is None else seed_override
    task = manifest.task

    # load everything up front: an invalid manifest writes nothing
    train = load_jsonl(manifest.data["train"], "train", task)
    dev = load_jsonl(manifest.data["dev"], "dev", task) if "dev" in manifest.data else None
    test = load_jsonl(manifest.data["test"], "test", task) if "test" in manifest.data else None
    pool = (
        load_jsonl(manifest.data["unlabeled"], "unlabeled", task)
        if "unlabeled" in manifest.data
        else None
    )
    if dry_run:
        return {"validated": True, "manifest": str(manifest_path)}

    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    stages: dict[str, dict] = {}

    # sample
    base_n = manifest.mix.get("base_n", len(train))
    mix_plan = MixPlan(
        original_fraction=manifest.mix["original_fraction"],
        synthetic_fraction=manifest.mix["synthetic_fraction"],
        base_n=base_n,
        seed=derive_seed(seed, "mix"),
    )
    original_subset = sample_fraction(
        train, mix_plan.original_fraction, derive_seed(seed, "sample")
    )
    sampled_path = out / "sampled.jsonl"
    save_jsonl(original_subset, sampled_path)
    stages["sample"] = {"artifact": str(sampled_path), "digest": _digest_file(sampled_path)}

    # synthesize
    plan = synthesis.SynthesisPlan(
        mode=manifest.plan.mode,
        target_count=manifest.plan.target_count,
        annotate_count=manifest.plan.annotate_count,
        generate_count=manifest.plan.generate_count,
        temperature=manifest.plan.temperature,
        exemplar_policy=manifest.plan.exemplar_policy,
        max_resamples=manifest.plan.max_resamples,
        seed=derive_seed(seed, "synthesis"),
    )
    backend = make_backend(manifest.backend)
    checkpoint_path = out / "checkpoint.jsonl"
    if not resume and checkpoint_path.exists():
        checkpoint_path.unlink()
    if plan.mode == "annotate":
        result = run_annotation(plan, pool, task, backend, original_subset,
                                checkpoint_path=checkpoint_path)
    elif plan.mode == "generate":
        result = run_generation(plan, original_subset, task, backend,
                                checkpoint_path=checkpoint_path)
    else:
        result = run_combine(plan, pool, original_subset, task, backend,
                             checkpoint_path=checkpoint_path)
    synthetic_path = out / "synthetic.jsonl"
    save_records(result.records, synthetic_path)
    stages["synthesize"] = {
        "artifact": str(synthetic_path),
        "digest": _digest_file(synthetic_path),
        "records": len(result.records),
        "diagnostics": [vars(d) for d in result.diagnostics],
    }

    # mix
    augmented = build_augmented(original_subset, result.records, mix_plan)
    augmented_ds = to_dataset(augmented, task.task_id)
    augmented_path = out / "augmented.jsonl"
    save_jsonl(augmented_ds, augmented_path)
    save_provenance(augmented, out / "augmented.provenance.json")
    stages["mix"] = {
        "artifact": str(augmented_path),
        "digest": _digest_file(augmented_path),
        "composition": {"original": augmented.n_original, "synthetic": augmented.n_synthetic},
        "report": composition_report(augmented),
    }

    # export
    export_dir = out / "export"
    export_manifest = export_training_set(
        augmented, dev or Dataset((), "dev", task.task_id),
        test or Dataset((), "test", task.task_id), export_dir, task
    )
    stages["export"] = export_manifest

    # train + evaluate
    metrics: dict[str, dict] = {}
    trainer_id = "baseline-nearest-neighbor"
    if manifest.trainer is not None:
        student = invoke_trainer(manifest.trainer, export_manifest, out / "trainer")
        trainer_id = student.trainer_id
        metrics["dev"] = student.dev_metrics.to_dict()
        metrics["test"] = student.test_metrics.to_dict()
    else:
        if dev is not None and len(dev):
            metrics["dev"] = baseline_student(augmented_ds, dev, task).to_dict()
        if test is not None and len(test):
            metrics["test"] = baseline_student(augmented_ds, test, task).to_dict()
    stages["evaluate"] = {"trainer_id": trainer_id}

    ledger = {
        "schema_version": SCHEMA_VERSION,
        "manifest_digest": _digest_file(Path(manifest_path)),
        "seed": seed,
        "seed_scheme": "sha256-v1",
        "task": task.to_dict(),
        "mode": plan.mode,
        "fractions": {
            "original": mix_plan.original_fraction,
            "synthetic": mix_plan.synthetic_fraction,
            "base_n": base_n,
        },
        "stages": stages,
        "usage": backend.usage_totals,
        "metrics": metrics,
        "trainer_id": trainer_id,
    }
    ledger_path = out / "ledger.json"
    ledger_path.write_text(
        json.dumps(ledger, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return ledger


TYPE_LABELS = {"annotate": "Y|X", "generate": "X,Y", "combine": "Y|X; X,Y"}


def _ledger_row(ledger: dict) -> dict:
    frac = ledger["fractions"]
    synthetic_pct = 100 * frac["synthetic"]
    row_type = "-" if frac["synthetic"] == 0 else TYPE_LABELS.get(ledger["mode"], "?")
    kind = ledger["task"]["kind"]

    def headline(split):
        m = ledger["metrics"].get(split)
        if m is None:
            return "N/A", None
        report = MetricsReport.from_dict(m)
        if kind == "classification":
            return f"{100 * report.accuracy_report.accuracy:.2f}", report.accuracy_report.accuracy
        return report.headline(), report.rouge.rougeL.f1

    dev_text, dev_key = headline("dev")
    test_text, test_key = headline("test")
    return {
        "task": ledger["task"]["task_id"],
        "kind": kind,
        "type": row_type,
        "original_pct": 100 * frac["original"],
        "synthetic_pct": synthetic_pct,
        "dev": dev_text,
        "test": test_text,
        "sort_key": dev_key if dev_key is not None else (test_key or 0.0),
    }


def cmd_report(ledger_paths) -> str:
    """Comparison table across run ledgers, best row per group marked."""
    if not ledger_paths:
        raise ManifestError("report needs at least one ledger")
    ledgers = [json.loads(Path(p).read_text(encoding="utf-8")) for p in ledger_paths]
    kinds = {led["task"]["kind"] for led in ledgers}
    if len(kinds) > 1:
        raise ManifestError(f"cannot mix task kinds in one table: {sorted(kinds)}")
    rows = [_ledger_row(led) for led in ledgers]

    # group rows by (task, original%); ties for best are marked jointly
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["task"], row["original_pct"]), []).append(row)
    for members in groups.values():
        best = max(m["sort_key"] for m in members)
        for m in members:
            m["best"] = m["sort_key"] == best

    header = f"{'Dataset':<12} {'Type':<10} {'Original':>9} {'Ours':>9} {'Dev':>24} {'Test':>24}"
    lines = [header, "-" * len(header)]
    for (task_id, orig_pct), members in groups.items():
        for m in members:
            mark = "*" if m["best"] else " "
            lines.append(
                f"{task_id:<12} {m['type']:<10} {orig_pct:>8g}% {m['synthetic_pct']:>8g}% "
                f"{m['dev']:>24} {m['test']:>23}{mark}"
            )
    return "\n".join(lines)


@click.group()
def main():
    """Synthetic training data pipeline."""


@main.command("run")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--resume", is_flag=True, help="Continue from the synthesis checkpoint.")
@click.option("--dry-run", is_flag=True, help="Validate the manifest and exit.")
@click.option("--seed-override", type=int, default=None)
def run_cmd(manifest, resume, dry_run, seed_override):
    """Run the full pipeline described by a manifest."""
    try:
        ledger = cmd_run(manifest, resume=resume, dry_run=dry_run, seed_override=seed_override)
    except (ManifestError, CorpusError, SynthesisError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (BackendUnavailable, BackendError) as e:
        click.echo(f"backend failure: {e}", err=True)
        sys.exit(EXIT_BACKEND)
    except (TrainerFailed, TrainerTimeout) as e:
        click.echo(f"trainer failure: {e}", err=True)
        sys.exit(EXIT_TRAINER)
    if dry_run:
        click.echo("manifest valid")
    else:
        click.echo(json.dumps(ledger.get("metrics", {}), indent=2, sort_keys=True))


@main.command("report")
@click.argument("ledgers", nargs=-1, type=click.Path(exists=True))
def report_cmd(ledgers):
    """Render a comparison table from run ledgers."""
    try:
        click.echo(cmd_report(list(ledgers)))
    except ManifestError as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


@main.command("ingest")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--split", required=True, type=click.Choice(["train", "dev", "test", "unlabeled"]))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def ingest_cmd(input_path, split, task_path, out):
    """Validate a JSONL file and write its normalized form."""
    try:
        task = _load_task(task_path)
        ds = load_jsonl(input_path, split, task)
        save_jsonl(ds, out)
    except (CorpusError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"wrote {len(ds)} examples to {out}")


@main.command("sample")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="train", type=click.Choice(["train", "dev", "test", "unlabeled"]))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", required=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def sample_cmd(input_path, split, task_path, fraction, seed, out):
    """Deterministically sample a fraction of a dataset."""
    try:
        task = _load_task(task_path)
        ds = load_jsonl(input_path, split, task)
        sampled = sample_fraction(ds, fraction, seed)
        save_jsonl(sampled, out)
    except (CorpusError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"sampled {len(sampled)} of {len(ds)} examples to {out}")


@main.command("synthesize")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--resume", is_flag=True)
def synthesize_cmd(manifest, resume):
    """Run only ingest+sample+synthesize from a manifest."""
    try:
        m = RunManifest.load(manifest)
        task = m.task
        train = load_jsonl(m.data["train"], "train", task)
        pool = (
            load_jsonl(m.data["unlabeled"], "unlabeled", task)
            if "unlabeled" in m.data else None
        )
        m.output_dir.mkdir(parents=True, exist_ok=True)
        original_subset = sample_fraction(
            train, m.mix["original_fraction"], derive_seed(m.seed, "sample")
        )
        plan = synthesis.SynthesisPlan(
            mode=m.plan.mode,
            target_count=m.plan.target_count,
            annotate_count=m.plan.annotate_count,
            generate_count=m.plan.generate_count,
            temperature=m.plan.temperature,
            exemplar_policy=m.plan.exemplar_policy,
            max_resamples=m.plan.max_resamples,
            seed=derive_seed(m.seed, "synthesis"),
        )
        checkpoint = m.output_dir / "checkpoint.jsonl"
        if not resume and checkpoint.exists():
            checkpoint.unlink()
        if plan.mode == "annotate":
            result = run_annotation(plan, pool, task, m.backend, original_subset,
                                    checkpoint_path=checkpoint)
        elif plan.mode == "generate":
            result = run_generation(plan, original_subset, task, m.backend,
                                    checkpoint_path=checkpoint)
        else:
            result = run_combine(plan, pool, original_subset, task, m.backend,
                                 checkpoint_path=checkpoint)
        out_path = m.output_dir / "synthetic.jsonl"
        save_records(result.records, out_path)
    except (ManifestError, CorpusError, SynthesisError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (BackendUnavailable, BackendError) as e:
        click.echo(f"backend failure: {e}", err=True)
        sys.exit(EXIT_BACKEND)
    click.echo(f"wrote {len(result.records)} synthetic records to {out_path}")


@main.command("mix")
@click.option("--original", required=True, type=click.Path(exists=True))
@click.option("--synthetic", required=True, type=click.Path(exists=True))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--original-fraction", required=True, type=float)
@click.option("--synthetic-fraction", required=True, type=float)
@click.option("--base-n", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def mix_cmd(original, synthetic, task_path, original_fraction, synthetic_fraction,
            base_n, seed, out):
    """Build an augmented train set from originals and synthetic records."""
    try:
        task = _load_task(task_path)
        original_ds = load_jsonl(original, "train", task)
        records = load_records(synthetic)
        plan = MixPlan(
            original_fraction=original_fraction,
            synthetic_fraction=synthetic_fraction,
            base_n=base_n,
            seed=seed,
        )
        augmented = build_augmented(original_ds, records, plan)
        save_jsonl(to_dataset(augmented, task.task_id), out)
        save_provenance(augmented, str(out) + ".provenance.json")
    except (CorpusError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(composition_report(augmented))


@main.command("evaluate")
@click.option("--predictions", required=True, type=click.Path(exists=True))
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def evaluate_cmd(predictions, gold, task_path, out):
    """Score prediction JSONL against gold JSONL."""
    try:
        task = _load_task(task_path)
        pred_ds = load_jsonl(predictions, "test", task)
        gold_ds = load_jsonl(gold, "test", task)
        if task.kind == "classification":
            report = MetricsReport(
                kind="classification",
                accuracy_report=accuracy(list(pred_ds), list(gold_ds)),
            )
        else:
            gold_by_id = {ex.id: ex for ex in gold_ds}
            pairs = [(ex.output or "", gold_by_id[ex.id].output or "") for ex in pred_ds]
            report = MetricsReport(kind="generation", rouge=corpus_rouge(pairs))
    except (CorpusError, ValueError, KeyError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(report.headline())


@main.command("export")
@click.option("--augmented", required=True, type=click.Path(exists=True))
@click.option("--provenance", required=True, type=click.Path(exists=True))
@click.option("--dev", required=True, type=click.Path(exists=True))
@click.option("--test", required=True, type=click.Path(exists=True))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def export_cmd(augmented, provenance, dev, test, task_path, out):
    """Export train/dev/test files plus a task card for a trainer."""
    try:
        task = _load_task(task_path)
        aug_ds = load_jsonl(augmented, "train", task)
        prov = json.loads(Path(provenance).read_text(encoding="utf-8"))
        plan = MixPlan(**prov["plan"])
        aug = AugmentedDataset(
            examples=aug_ds.examples,
            n_original=prov["composition"]["original"],
            n_synthetic=prov["composition"]["synthetic"],
            plan=plan,
            source_digests=tuple(prov.get("source_digests", ())),
        )
        dev_ds = load_jsonl(dev, "dev", task)
        test_ds = load_jsonl(test, "test", task)
        manifest = export_training_set(aug, dev_ds, test_ds, out, task)
    except (CorpusError, ValueError, KeyError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command("histogram")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="train", type=click.Choice(["train", "dev", "test"]))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
def histogram_cmd(input_path, split, task_path):
    """Label histogram for a classification dataset."""
    try:
        task = _load_task(task_path)
        ds = load_jsonl(input_path, split, task)
        counts = label_histogram(ds, task)
    except (CorpusError, ValueError) as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(json.dumps(counts, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
