from __future__ import annotations

import json

import pytest

from reftrack import workflows
from reftrack.dataio import SynthConfig, load_sequence, synth_generate
from reftrack.errors import NoData
from reftrack.geometry import ImageDims


@pytest.fixture
def two_sequence_dataset(tmp_path):
    """Two sequences; the first gets an extra single-target expression."""
    a = synth_generate(SynthConfig(n_targets=3, n_frames=30, dims=ImageDims(300, 300), seed=1),
                       tmp_path / "data" / "alpha")
    synth_generate(SynthConfig(n_targets=2, n_frames=30, dims=ImageDims(300, 300), seed=2),
                   tmp_path / "data" / "beta")
    payload = json.loads((a / "expressions.json").read_text())
    payload["expressions"].append({
        "expression": "the lone second target",
        "targets": [{"id": 2, "ranges": [[1, 30]]}],
    })
    (a / "expressions.json").write_text(json.dumps(payload, indent=2))
    return tmp_path / "data"


class TestRunTrack:
    def test_tracks_every_sequence_and_expression(self, two_sequence_dataset, tmp_path):
        out = tmp_path / "preds"
        summary = workflows.run_track(two_sequence_dataset, out, seed=3)
        assert [(r.sequence, r.expression_index) for r in summary.rows] == [
            ("alpha", 1), ("alpha", 2), ("beta", 1)]
        assert (out / "alpha" / "001.txt").is_file()
        assert (out / "alpha" / "002.txt").is_file()
        assert (out / "beta" / "001.txt").is_file()
        single = next(r for r in summary.rows if r.expression_index == 2)
        assert single.tracks == 1  # the restricted expression follows one target

    def test_filter_by_index(self, two_sequence_dataset, tmp_path):
        summary = workflows.run_track(
            two_sequence_dataset / "alpha", tmp_path / "p", expression_filter="2", seed=3)
        assert [(r.sequence, r.expression_index) for r in summary.rows] == [("alpha", 2)]

    def test_filter_by_substring(self, two_sequence_dataset, tmp_path):
        summary = workflows.run_track(
            two_sequence_dataset / "alpha", tmp_path / "p", expression_filter="lone", seed=3)
        assert [r.expression_index for r in summary.rows] == [2]

    def test_filter_without_match(self, two_sequence_dataset, tmp_path):
        with pytest.raises(NoData):
            workflows.run_track(two_sequence_dataset / "alpha", tmp_path / "p",
                                expression_filter="unicorns", seed=3)

    def test_filter_index_out_of_range(self, two_sequence_dataset, tmp_path):
        with pytest.raises(NoData):
            workflows.run_track(two_sequence_dataset / "alpha", tmp_path / "p",
                                expression_filter="9", seed=3)


class TestRunEval:
    def test_pools_across_sequences_and_expressions(self, two_sequence_dataset, tmp_path):
        out = tmp_path / "preds"
        workflows.run_track(two_sequence_dataset, out, seed=3)
        outcome = workflows.run_eval(out, two_sequence_dataset)
        assert outcome.combined.hota == pytest.approx(1.0, abs=1e-9)
        assert len(outcome.per_expression) == 3
        assert outcome.macro.hota == pytest.approx(1.0, abs=1e-9)

    def test_missing_file_scored_as_empty_with_warning(self, two_sequence_dataset, tmp_path):
        out = tmp_path / "preds"
        workflows.run_track(two_sequence_dataset, out, seed=3)
        (out / "beta" / "001.txt").unlink()
        outcome = workflows.run_eval(out, two_sequence_dataset)
        assert outcome.warnings
        assert outcome.combined.detre < 1.0
        beta = next(e for e in outcome.per_expression if e.sequence == "beta")
        assert beta.report.hota == 0.0

    def test_restricted_expression_ground_truth(self, two_sequence_dataset):
        manifest, gt, exprs = load_sequence(two_sequence_dataset / "alpha")
        from reftrack.dataio import restrict_to_expression

        sub = restrict_to_expression(gt, exprs[1])
        assert sub.identities() == {2}


class TestRunReward:
    def test_expression_restriction_changes_gt_count(self, two_sequence_dataset):
        records = [workflows.RewardRecord("alpha", 1, "<think>t</think><answer>[0,0,1,1]</answer>", 100)]
        full = workflows.run_reward(records, two_sequence_dataset / "alpha", 0.0)
        restricted = workflows.run_reward(records, two_sequence_dataset / "alpha", 0.0,
                                          expression_index=2)
        assert full[0]["n_gt"] == 3
        assert restricted[0]["n_gt"] == 1

    def test_derived_seed_is_stable(self):
        a = workflows.derived_seed(42, 7, 1)
        b = workflows.derived_seed(42, 7, 1)
        c = workflows.derived_seed(42, 7, 2)
        assert a == b != c
