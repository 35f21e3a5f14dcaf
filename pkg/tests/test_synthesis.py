import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthpipe.backend import (
    Backend,
    BackendConfig,
    BackendUnavailable,
    make_backend,
)
from synthpipe.corpus import Dataset, Example, TaskSpec
from synthpipe.prompting import ExemplarPolicy
from synthpipe.synthesis import (
    SynthesisError,
    SynthesisPlan,
    SyntheticRecord,
    load_records,
    normalize_for_dedup,
    run_annotation,
    run_combine,
    run_generation,
    save_records,
    validate_label,
)

from conftest import make_dataset


def unlabeled_pool(n, prefix="pool"):
    return Dataset(
        tuple(Example(id=f"{prefix}{i}", input=f"{prefix} item {i}") for i in range(n)),
        "unlabeled",
        "toy",
    )


def plan_for(mode, m, **kw):
    kw.setdefault("exemplar_policy", ExemplarPolicy(k=2))
    return SynthesisPlan(mode=mode, target_count=m, seed=kw.pop("seed", 11), **kw)


class TestNormalize:
    def test_collapses_whitespace(self):
        assert normalize_for_dedup("  The  Cat ") == "the cat"

    def test_empty(self):
        assert normalize_for_dedup("") == ""

    @settings(max_examples=200, deadline=None)
    @given(st.text())
    def test_idempotent(self, t):
        once = normalize_for_dedup(t)
        assert normalize_for_dedup(once) == once


class TestValidateLabel:
    def test_near_miss_mapped(self, bool_task):
        assert validate_label("Yes.", bool_task) == "yes"
        assert validate_label(" NO ", bool_task) == "no"

    def test_out_of_set(self, bool_task):
        assert validate_label("maybe", bool_task) is None

    def test_generation_passthrough(self, gen_task):
        assert validate_label("anything", gen_task) == "anything"


class TestRunAnnotation:
    def test_lookup_gold_labels(self, bool_task):
        pool = unlabeled_pool(10)
        table = {ex.input: ("yes" if i % 2 else "no") for i, ex in enumerate(pool)}
        cfg = BackendConfig(kind="mock-lookup", model_name="lookup", lookup_table=table)
        exemplars = Dataset(
            tuple(Example(id=f"e{i}", input=f"q {i}", output="yes") for i in range(4)),
            "train",
            "toy",
        )
        result = run_annotation(plan_for("annotate", 10), pool, bool_task, cfg, exemplars)
        assert len(result.records) == 10
        for rec in result.records:
            assert rec.output == table[rec.input]
            assert rec.source_id is not None
            assert rec.mode == "annotate"
            assert rec.teacher == "lookup"
            assert rec.temperature == 0.1

    def test_out_of_set_label_drops_after_resamples(self, bool_task):
        pool = unlabeled_pool(4)
        cfg = BackendConfig(kind="mock-scripted", script=(" maybe",))
        exemplars = Dataset(
            tuple(Example(id=f"e{i}", input=f"q {i}", output="yes") for i in range(4)),
            "train",
            "toy",
        )
        result = run_annotation(
            plan_for("annotate", 4, max_resamples=2), pool, bool_task, cfg, exemplars
        )
        assert len(result.records) == 0
        dropped = [d for d in result.diagnostics if d.kind == "dropped"]
        assert len(dropped) == 4
        assert all(d.attempts == 3 for d in dropped)

    def test_empty_pool_errors(self, bool_task):
        cfg = BackendConfig(kind="mock-echo")
        with pytest.raises(SynthesisError):
            run_annotation(
                plan_for("annotate", 0), unlabeled_pool(0), bool_task, cfg, make_dataset(4)
            )

    def test_temperature_override_recorded(self, gen_task):
        pool = unlabeled_pool(2)
        table = {ex.input: "resp" for ex in pool}
        cfg = BackendConfig(kind="mock-lookup", lookup_table=table)
        result = run_annotation(
            plan_for("annotate", 2, temperature=0.5), pool, gen_task, cfg, make_dataset(4)
        )
        assert all(rec.temperature == 0.5 for rec in result.records)

    def test_structured_input_annotation(self, gen_task):
        # data-to-text items keep their [CONTEXT]/[DATA] field serialization
        item = "[CONTEXT] Airport [DATA] Al_Asad_Airbase | operatingOrganisation | USAF"
        pool = Dataset((Example(id="w0", input=item),), "unlabeled", "toy")
        verbalization = "Al Asad Airbase is operated by the USAF."
        cfg = BackendConfig(kind="mock-lookup", lookup_table={item: verbalization})
        result = run_annotation(plan_for("annotate", 1), pool, gen_task, cfg, make_dataset(4))
        assert result.records[0].input == item
        assert result.records[0].output == verbalization

    def test_parallel_run_is_deterministic(self, gen_task):
        pool = unlabeled_pool(20)
        table = {ex.input: f"resp {ex.id}" for ex in pool}

        def run(parallelism):
            cfg = BackendConfig(
                kind="mock-lookup", lookup_table=table, parallelism=parallelism
            )
            return run_annotation(
                plan_for("annotate", 20), pool, gen_task, cfg, make_dataset(4)
            ).records

        assert run(1) == run(4)


def gen_script(n, stride=1):
    return tuple(f" fresh input {i * stride}\n[OUTPUT] fresh output {i}" for i in range(n))


class TestRunGeneration:
    def test_scripted_three_distinct(self, gen_task):
        cfg = BackendConfig(kind="mock-scripted", model_name="scripted", script=gen_script(3))
        result = run_generation(plan_for("generate", 3), make_dataset(4), gen_task, cfg)
        assert len(result.records) == 3
        assert [rec.input for rec in result.records] == [
            "fresh input 0", "fresh input 1", "fresh input 2"
        ]
        assert all(rec.mode == "generate" and rec.temperature == 0.8 for rec in result.records)
        assert all(rec.source_id is None for rec in result.records)

    def test_identical_pair_shortfall(self, gen_task):
        cfg = BackendConfig(kind="mock-scripted", script=(" same\n[OUTPUT] out",))
        result = run_generation(
            plan_for("generate", 5, max_resamples=1), make_dataset(4), gen_task, cfg
        )
        assert len(result.records) == 1
        shortfalls = [d for d in result.diagnostics if d.kind == "shortfall"]
        assert len(shortfalls) == 1
        assert "4" in shortfalls[0].detail

    def test_exemplar_copy_rejected_and_resampled(self, gen_task):
        source = make_dataset(4)
        copied = source.examples[0].input
        cfg = BackendConfig(
            kind="mock-scripted",
            script=(f" {copied}\n[OUTPUT] echoed", " novel input\n[OUTPUT] out"),
        )
        result = run_generation(
            plan_for("generate", 1, max_resamples=2), source, gen_task, cfg
        )
        assert len(result.records) == 1
        assert result.records[0].input == "novel input"

    def test_no_normalized_collisions(self, gen_task):
        source = make_dataset(6)
        cfg = BackendConfig(kind="mock-scripted", script=gen_script(40))
        result = run_generation(plan_for("generate", 20), source, gen_task, cfg)
        normalized = [normalize_for_dedup(rec.input) for rec in result.records]
        assert len(set(normalized)) == len(normalized)
        source_norms = {normalize_for_dedup(ex.input) for ex in source}
        assert not source_norms.intersection(normalized)

    def test_classification_labels_validated(self, bool_task):
        script = (
            " q one\n[OUTPUT] Yes.",
            " q two\n[OUTPUT] maybe",
            " q three\n[OUTPUT] no",
        )
        source = Dataset(
            tuple(Example(id=f"e{i}", input=f"orig q {i}", output="yes") for i in range(4)),
            "train",
            "toy",
        )
        cfg = BackendConfig(kind="mock-scripted", script=script)
        result = run_generation(
            plan_for("generate", 3, max_resamples=3), source, bool_task, cfg
        )
        assert all(rec.output in {"yes", "no"} for rec in result.records)

    def test_tag_literal_in_exemplars_rejected(self, gen_task):
        bad = Dataset(
            (Example(id="b", input="contains [OUTPUT] inline", output="y"),),
            "train",
            "toy",
        )
        cfg = BackendConfig(kind="mock-scripted", script=gen_script(2))
        with pytest.raises(SynthesisError, match="tag literal"):
            run_generation(
                plan_for("generate", 1, exemplar_policy=ExemplarPolicy(k=1)),
                bad,
                gen_task,
                cfg,
            )


class TestRunCombine:
    def test_equal_counts(self, gen_task):
        pool = unlabeled_pool(10)
        table = {ex.input: f"resp {ex.id}" for ex in pool}

        class DualBackend(Backend):
            # annotate prompts end with [OUTPUT]; generate prompts with [INPUT]
            def _complete_raw(self, req):
                if req.prompt.endswith("[OUTPUT]"):
                    key = req.prompt.rsplit("[INPUT]", 1)[1].rsplit("[OUTPUT]", 1)[0].strip()
                    return " " + table[key], 1
                n = req.request_id.split("-")[1]
                return f" brand new input {n}\n[OUTPUT] new output {n}", 1

        backend = DualBackend(BackendConfig(kind="mock-scripted", script=("unused",)))
        plan = SynthesisPlan(
            mode="combine",
            annotate_count=5,
            generate_count=5,
            seed=3,
            exemplar_policy=ExemplarPolicy(k=2),
        )
        result = run_combine(plan, pool, make_dataset(6), gen_task, backend)
        assert len(result.records) == 10
        modes = [rec.mode for rec in result.records]
        assert modes == ["annotate"] * 5 + ["generate"] * 5

    def test_zero_annotate_degenerates_to_generation(self, gen_task):
        cfg = BackendConfig(kind="mock-scripted", script=gen_script(4))
        plan = SynthesisPlan(
            mode="combine", annotate_count=0, generate_count=3, seed=3,
            exemplar_policy=ExemplarPolicy(k=2),
        )
        result = run_combine(plan, unlabeled_pool(3), make_dataset(4), gen_task, cfg)
        assert len(result.records) == 3
        assert all(rec.mode == "generate" for rec in result.records)

    def test_both_zero(self, gen_task):
        cfg = BackendConfig(kind="mock-scripted", script=("x",))
        plan = SynthesisPlan(mode="combine", annotate_count=0, generate_count=0, seed=1)
        result = run_combine(plan, unlabeled_pool(1), make_dataset(4), gen_task, cfg)
        assert result.records == []


class FlakyBackend(Backend):
    """Fails every request after the first `budget` completions."""

    def __init__(self, cfg, budget, table):
        super().__init__(cfg)
        self.budget = budget
        self.table = table

    def _complete_raw(self, req):
        if self.budget <= 0:
            raise BackendUnavailable("budget exhausted")
        self.budget -= 1
        key = req.prompt.rsplit("[INPUT]", 1)[1].rsplit("[OUTPUT]", 1)[0].strip()
        return " " + self.table[key], 1


class TestCheckpointResume:
    def test_abort_then_resume(self, gen_task, tmp_path):
        pool = unlabeled_pool(8)
        table = {ex.input: f"resp {ex.id}" for ex in pool}
        cfg = BackendConfig(kind="mock-scripted", script=("unused",))
        checkpoint = tmp_path / "ckpt.jsonl"
        plan = plan_for("annotate", 8)

        flaky = FlakyBackend(cfg, budget=3, table=table)
        with pytest.raises(BackendUnavailable, match="checkpoint"):
            run_annotation(plan, pool, gen_task, flaky, make_dataset(4),
                           checkpoint_path=checkpoint)
        partial = load_records(checkpoint)
        assert 0 < len(partial) < 8

        healthy = FlakyBackend(cfg, budget=100, table=table)
        resumed = run_annotation(plan, pool, gen_task, healthy, make_dataset(4),
                                 checkpoint_path=checkpoint)
        clean = run_annotation(plan, pool, gen_task,
                               FlakyBackend(cfg, budget=100, table=table), make_dataset(4))
        assert resumed.records == clean.records


class TestRecordPersistence:
    def test_round_trip(self, tmp_path):
        rec = SyntheticRecord(
            input="x", output="y", mode="generate", teacher="t", temperature=0.8,
            prompt_hash="abc", job_index=3, seed=9, exemplar_ids=("a", "b"),
        )
        path = tmp_path / "records.jsonl"
        save_records([rec], path)
        assert load_records(path) == [rec]
