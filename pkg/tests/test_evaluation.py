import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decoyqa.evaluation import (
    DegenerateVarianceError, EvaluationError, EvaluationReport, Labels, MissingLabelsError,
    emit_report, evaluate_scores, parse_report_csv, parse_report_json, pearson, per_target_loss,
    rank_pool, report_csv, report_json, selection_metrics,
)
from decoyqa.pipeline import ModelRecord, QaDataset

from oracles import brute_loss, brute_pearson, synthetic_pools


def _dataset(truths: dict[str, dict[str, float]]) -> QaDataset:
    return QaDataset({t: [ModelRecord(t, m, {}, g, g ** 1.1, 20 * (1 - g)) for m, g in pool.items()]
                      for t, pool in truths.items()})


def test_pearson_examples():
    assert pearson([0.1, 0.2, 0.3], [0.2, 0.4, 0.6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([0, 1, 2, 3], [0, 1, 2, 5]) == pytest.approx(8 / np.sqrt(70), abs=1e-12)


def test_pearson_zero_variance():
    with pytest.raises(DegenerateVarianceError, match="degenerate variance"):
        pearson([1, 1, 1], [1, 2, 3])


def test_loss_examples():
    truths = {"a": 0.4, "b": 0.7, "c": 0.5}
    assert per_target_loss(rank_pool("T", {"a": 0.1, "b": 0.9, "c": 0.5}), truths) == 0.0
    assert per_target_loss(rank_pool("T", {"a": 0.1, "b": 0.2, "c": 0.5}), truths) == pytest.approx(0.2)
    assert per_target_loss(rank_pool("T", {"a": 0.3}), {"a": 0.4}) == 0.0


def test_loss_missing_labels_listed():
    with pytest.raises(MissingLabelsError, match="b"):
        per_target_loss(rank_pool("T", {"a": 0.1, "b": 0.2}), {"a": 0.4})


def test_ranking_ties_by_model_id():
    ranking = rank_pool("T", {"m3": 0.5, "m1": 0.5, "m2": 0.9})
    assert ranking.model_ids == ["m2", "m1", "m3"]


def _labels(tms):
    ids = list(tms)
    return Labels({m: tms[m] for m in ids}, tms, {m: 10 * (1 - tms[m]) for m in ids})


def test_best_of_five_small_pool():
    tms = {"a": 0.3, "b": 0.6, "c": 0.4}
    out = selection_metrics(rank_pool("T", {"a": 0.9, "b": 0.1, "c": 0.5}), _labels(tms))
    assert out["best5_tm"] == 0.6 and out["top1_tm"] == 0.3


def test_best_of_five_listed_values():
    tms = {f"m{i}": v for i, v in enumerate([0.2, 0.26, 0.23, 0.21, 0.19, 0.9])}
    scores = {f"m{i}": 1.0 - i / 10 for i in range(6)}
    out = selection_metrics(rank_pool("T", scores), _labels(tms))
    assert out["best5_tm"] == 0.26
    assert out["best5_rmsd_of_best_tm"] == pytest.approx(7.4)
    assert out["best5_min_rmsd"] == pytest.approx(7.4)


def test_top_is_true_best():
    tms = {"a": 0.3, "b": 0.6, "c": 0.4}
    out = selection_metrics(rank_pool("T", {"a": 0.1, "b": 0.9, "c": 0.5}), _labels(tms))
    assert out["top1_tm"] == max(tms.values())


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4),
                       st.tuples(st.floats(-5, 5), st.floats(0, 1)), min_size=1, max_size=12),
       st.floats(0.1, 10.0), st.floats(-3, 3))
def test_ranking_properties(pool, scale, shift):
    scores = {m: s for m, (s, _) in pool.items()}
    truth = {m: g for m, (_, g) in pool.items()}
    ranking = rank_pool("T", scores)
    assert sorted(ranking.model_ids) == sorted(pool)
    values = [s for _, s in ranking.ranked]
    assert values == sorted(values, reverse=True)
    # a positive affine rescaling of scores keeps the order
    moved = rank_pool("T", {m: s * scale + shift for m, s in scores.items()})
    if len(set(scores.values())) == len(scores) and len({s * scale + shift for s in scores.values()}) == len(scores):
        assert moved.model_ids == ranking.model_ids
    loss = per_target_loss(ranking, truth)
    assert loss >= 0.0
    assert (loss == 0.0) == (truth[ranking.top] == max(truth.values()))
    out = selection_metrics(ranking, Labels(truth, truth, truth))
    assert out["best5_tm"] >= out["top1_tm"]


def test_metrics_match_brute_force():
    for scores, truths in synthetic_pools(seed=0):
        ranking = rank_pool("T", scores)
        ids = list(scores)
        if len(set(scores.values())) > 1:
            got = pearson([scores[m] for m in ids], [truths[m] for m in ids])
            assert abs(got - brute_pearson([scores[m] for m in ids], [truths[m] for m in ids])) <= 1e-12
        assert abs(per_target_loss(ranking, truths) - brute_loss(scores, truths)) <= 1e-12


def test_perfect_predictor_report():
    rng = np.random.default_rng(1)
    truths = {f"T{t}": {f"m{i}": float(g) for i, g in enumerate(rng.random(6))} for t in range(4)}
    scores = {(t, m): g for t, pool in truths.items() for m, g in pool.items()}
    report = evaluate_scores(scores, _dataset(truths))
    assert report.aggregate["pearson"] == pytest.approx(1.0)
    assert report.aggregate["loss"] == 0.0


def test_constant_predictor_is_degenerate():
    truths = {"T1": {"b": 0.5, "a": 0.2, "c": 0.9}, "T2": {"x": 0.3, "y": 0.1}}
    scores = {(t, m): 0.5 for t, pool in truths.items() for m in pool}
    report = evaluate_scores(scores, _dataset(truths))
    assert report.skipped["degenerate variance"] == ["T1", "T2"]
    assert report.aggregate["pearson"] is None
    # ties fall to the lexicographically first id: "a" (0.2) and "x" (0.3)
    assert [r["loss"] for r in report.rows] == pytest.approx([0.7, 0.0])


def test_single_model_target_keeps_loss():
    report = evaluate_scores({("T1", "a"): 0.4, ("T2", "b"): 0.1, ("T2", "c"): 0.2},
                             _dataset({"T1": {"a": 0.5}, "T2": {"b": 0.2, "c": 0.6}}))
    assert report.skipped["fewer than 2 models"] == ["T1"]
    assert report.rows[0]["pearson"] is None and report.rows[0]["loss"] == 0.0


def test_aggregate_is_mean_of_rows():
    truths = {t: dict(zip([f"m{i}" for i in range(8)], g.tolist()))
              for t, g in zip("ABCDE", np.random.default_rng(3).random((5, 8)))}
    rng = np.random.default_rng(4)
    scores = {(t, m): float(rng.random()) for t, pool in truths.items() for m in pool}
    report = evaluate_scores(scores, _dataset(truths))
    for col in ("pearson", "loss", "top1_gdt", "best5_tm"):
        assert report.aggregate[col] == pytest.approx(np.mean([r[col] for r in report.rows]), abs=1e-12)


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    truths = {t: {f"m{i}": float(g) for i, g in enumerate(rng.random(7))} for t in ("T1", "T2", "T3")}
    scores = {(t, m): float(rng.random()) for t, pool in truths.items() for m in pool}
    report = evaluate_scores(scores, _dataset(truths))
    emit_report(report, tmp_path / "r.json", "json")
    first = parse_report_json((tmp_path / "r.json").read_text())
    emit_report(first, tmp_path / "r.csv", "csv")
    second = parse_report_csv((tmp_path / "r.csv").read_text())
    assert second.rows == report.rows and second.aggregate == report.aggregate
    assert report_json(EvaluationReport(second.rows, second.aggregate, report.skipped)) == report_json(report)
    assert report_csv(second) == report_csv(report)


def test_empty_report():
    with pytest.raises(EvaluationError, match="nothing to report"):
        emit_report(EvaluationReport([], {}), "unused.csv")
    with pytest.raises(EvaluationError, match="nothing to report"):
        evaluate_scores({}, _dataset({"T": {"a": 0.5}}))
