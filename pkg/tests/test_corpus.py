import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthpipe.corpus import (
    OUT_OF_SET,
    CorpusError,
    Dataset,
    Example,
    TaskSpec,
    label_histogram,
    load_jsonl,
    round_half_up,
    sample_fraction,
    save_jsonl,
)

from conftest import make_dataset, write_jsonl


@pytest.fixture
def task():
    return TaskSpec(task_id="t", description="d", kind="generation")


class TestLoadJsonl:
    def test_empty_file(self, tmp_path, task):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        ds = load_jsonl(path, "train", task)
        assert len(ds) == 0

    def test_line_count_is_n(self, tmp_path, task):
        rows = [{"id": str(i), "input": f"x{i}", "output": f"y{i}"} for i in range(2500)]
        path = write_jsonl(tmp_path / "rte.jsonl", rows)
        ds = load_jsonl(path, "train", task)
        assert len(ds) == 2500

    def test_duplicate_id_names_both_lines(self, tmp_path, task):
        rows = [{"id": str(i), "input": "x", "output": "y"} for i in range(8)]
        rows[2]["id"] = "dup"
        rows[6]["id"] = "dup"
        path = write_jsonl(tmp_path / "dup.jsonl", rows)
        with pytest.raises(CorpusError, match=r"lines 3 and 7"):
            load_jsonl(path, "train", task)

    def test_malformed_line_names_line_number(self, tmp_path, task):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "0", "input": "x", "output": "y"}\nnot json\n')
        with pytest.raises(CorpusError, match=r":2:"):
            load_jsonl(path, "train", task)

    def test_missing_output_on_labeled_split(self, tmp_path, task):
        path = write_jsonl(tmp_path / "m.jsonl", [{"id": "0", "input": "x"}])
        with pytest.raises(CorpusError, match="missing output"):
            load_jsonl(path, "train", task)
        assert len(load_jsonl(path, "unlabeled", task)) == 1

    def test_missing_ids_assigned_from_line_index(self, tmp_path, task):
        path = write_jsonl(
            tmp_path / "noid.jsonl",
            [{"input": "a", "output": "1"}, {"input": "b", "output": "2"}],
        )
        ds = load_jsonl(path, "train", task)
        assert [ex.id for ex in ds] == ["00000000", "00000001"]


class TestRoundTrip:
    def test_empty_round_trip(self, tmp_path, task):
        ds = Dataset((), "train", "t")
        path = tmp_path / "rt.jsonl"
        save_jsonl(ds, path)
        assert load_jsonl(path, "train", task).examples == ()

    @settings(max_examples=25, deadline=None)
    @given(
        pairs=st.lists(
            st.tuples(
                st.text(min_size=1).filter(lambda s: s.strip()),
                st.text(),
            ),
            max_size=30,
        )
    )
    def test_unicode_round_trip(self, tmp_path_factory, pairs):
        task = TaskSpec(task_id="t", description="d", kind="generation")
        ds = Dataset(
            tuple(Example(id=str(i), input=x, output=y) for i, (x, y) in enumerate(pairs)),
            "train",
            "t",
        )
        path = tmp_path_factory.mktemp("rt") / "rt.jsonl"
        save_jsonl(ds, path)
        reloaded = load_jsonl(path, "train", task)
        assert reloaded.examples == ds.examples
        # second save is byte-identical
        path2 = path.with_suffix(".2.jsonl")
        save_jsonl(reloaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_readonly_path_errors(self, tmp_path, task):
        ds = make_dataset(3)
        target = tmp_path / "no_such_dir" / "x.jsonl"
        with pytest.raises(OSError):
            save_jsonl(ds, target)


class TestRoundHalfUp:
    @pytest.mark.parametrize(
        "fraction,n,expected",
        [
            (0.05, 2500, 125),
            (0.10, 11514, 1151),
            (0.5, 3, 2),  # half rounds up
            (0.0, 100, 0),
            (1.0, 100, 100),
            (2.54, 5100, 12954),
        ],
    )
    def test_values(self, fraction, n, expected):
        assert round_half_up(fraction, n) == expected


class TestSampleFraction:
    def test_zero_fraction(self, train10):
        assert len(sample_fraction(train10, 0.0, 1)) == 0

    def test_full_fraction_is_identity(self, train10):
        assert sample_fraction(train10, 1.0, 5).examples == train10.examples

    def test_deterministic(self, train10):
        a = sample_fraction(train10, 0.5, 42)
        b = sample_fraction(train10, 0.5, 42)
        assert a.examples == b.examples

    def test_order_preserved(self):
        ds = make_dataset(100)
        sampled = sample_fraction(ds, 0.3, 7)
        positions = [ds.examples.index(ex) for ex in sampled]
        assert positions == sorted(positions)

    def test_rejects_out_of_range(self, train10):
        with pytest.raises(CorpusError):
            sample_fraction(train10, 1.5, 0)
        with pytest.raises(CorpusError):
            sample_fraction(train10, -0.1, 0)

    @pytest.mark.parametrize("n", [2500, 11514, 9427, 5100, 164982])
    def test_count_grid(self, n):
        # check the rounding contract without materializing huge datasets
        for pct in range(0, 101, 7):
            f = pct / 100.0
            from decimal import Decimal, ROUND_HALF_UP

            expected = int((Decimal(str(f)) * n).to_integral_value(rounding=ROUND_HALF_UP))
            assert round_half_up(f, n) == expected


class TestLabelHistogram:
    def test_counts(self, bool_task):
        ds = Dataset(
            tuple(
                Example(id=str(i), input="q", output=("yes" if i < 3 else "no"))
                for i in range(5)
            ),
            "train",
            "t",
        )
        counts = label_histogram(ds, bool_task)
        assert counts["yes"] == 3 and counts["no"] == 2 and counts[OUT_OF_SET] == 0

    def test_out_of_set_bucket(self, bool_task):
        ds = Dataset((Example(id="0", input="q", output="maybe"),), "train", "t")
        assert label_histogram(ds, bool_task)[OUT_OF_SET] == 1

    def test_empty_dataset(self, bool_task):
        counts = label_histogram(Dataset((), "train", "t"), bool_task)
        assert all(v == 0 for v in counts.values())

    def test_rejects_generation_task(self, task, train10):
        with pytest.raises(CorpusError):
            label_histogram(train10, task)


class TestInvariants:
    def test_unique_ids_enforced(self):
        with pytest.raises(CorpusError):
            Dataset(
                (Example(id="a", input="x", output="y"), Example(id="a", input="z", output="w")),
                "train",
                "t",
            )

    def test_empty_input_rejected(self):
        with pytest.raises(CorpusError):
            Example(id="a", input="   ")

    def test_classification_needs_labels(self):
        with pytest.raises(CorpusError):
            TaskSpec(task_id="t", description="d", kind="classification")
