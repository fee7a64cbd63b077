import random

import pytest
from hypothesis import given, settings, strategies as st

from avgen.backend import ConfigurationError
from avgen.evaluation import (
    ConsistencyError,
    CrossEvalMatrix,
    apply_discard_rule,
    build_cost_report,
    cross_eval,
    f1_score,
    score,
)
from avgen.ingest import ProductRecord
from avgen.pairs import AttrValuePair
from avgen.serdes import Strategy
from avgen.strategies import PredictionSet, StrategyCost, ensemble_combine, train_strategy
from tests.helpers import random_pairs, synthetic_corpus
from tests.oracles import brute_force_counts


def P(a, v):
    return AttrValuePair(a, v)


GOLD = [P("brand", "fossil"), P("color", "brown")]
PRED = [P("brand", "fossil"), P("material", "leather"), P("color", "red")]


def random_instance(rng, max_pairs=6, n_records=None):
    n_records = n_records or rng.randint(1, 4)
    golds, preds = [], []
    for i in range(n_records):
        gold = random_pairs(rng, rng.randint(0, max_pairs))
        pred = random_pairs(rng, rng.randint(0, max_pairs))
        golds.append(ProductRecord(f"r{i}", rng.choice(["a", "b"]), "text", tuple(gold)))
        preds.append(PredictionSet(f"r{i}", pred))
    return preds, golds


# -- discard rule -------------------------------------------------------------

def test_discard_rule_example():
    out = apply_discard_rule(PredictionSet("r", PRED), GOLD)
    assert out.pairs == [P("brand", "fossil"), P("color", "red")]
    assert out.diagnostics.discarded == 1


def test_discard_rule_noop_and_empty_gold():
    pred = PredictionSet("r", [P("Brand", "x")])
    assert apply_discard_rule(pred, GOLD).pairs == pred.pairs
    out = apply_discard_rule(PredictionSet("r", PRED), [])
    assert out.pairs == [] and out.diagnostics.discarded == 3


# -- score --------------------------------------------------------------------

def test_score_discard_example():
    report = score([PredictionSet("r", PRED)], [ProductRecord("r", "c", "t", tuple(GOLD))])
    assert (report.precision, report.recall, report.f1) == (0.5, 0.5, 0.5)
    assert report.counts.discarded == 1


def test_score_perfect():
    recs = synthetic_corpus(10)
    report = score([PredictionSet(r.id, list(r.pairs)) for r in recs], recs)
    assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)


def test_f1_from_published_precision_recall():
    assert f1_score(95.21, 75.62) == pytest.approx(84.29, abs=0.01)
    assert f1_score(0.0, 0.0) == 0.0


def test_score_empty_prediction_conventions():
    rec = ProductRecord("r", "c", "t", (P("a", "b"),))
    report = score([PredictionSet("r")], [rec])
    assert report.precision == 1.0 and report.recall == 0.0 and report.f1 == 0.0
    # missing prediction behaves like an empty one
    assert score([], [rec]).recall == 0.0


def test_score_unknown_id():
    with pytest.raises(ConsistencyError, match="nope"):
        score([PredictionSet("nope")], [ProductRecord("r", "c", "t", (P("a", "b"),))])


def test_score_per_category_and_serialization():
    recs = [ProductRecord("1", "shoes", "t", (P("a", "x"),)), ProductRecord("2", "hats", "t", (P("a", "y"),))]
    preds = [PredictionSet("1", [P("a", "x")]), PredictionSet("2", [P("a", "z")])]
    report = score(preds, recs, fingerprint="abc")
    assert report.per_category["shoes"] == (1.0, 1.0, 1.0)
    assert report.per_category["hats"][2] == 0.0
    doc = report.to_dict(seed=3)
    assert doc["precision"] == 50.0 and doc["fingerprint"] == "abc" and doc["seed"] == 3
    assert set(doc) >= {"precision", "recall", "f1", "counts", "per_category", "fingerprint"}


def test_macro_flag():
    recs = [ProductRecord("1", "c", "t", (P("a", "x"),)),
            ProductRecord("2", "c", "t", (P("a", "y"), P("b", "y"), P("c", "y")))]
    preds = [PredictionSet("1", [P("a", "x")]), PredictionSet("2", [])]
    micro, macro = score(preds, recs), score(preds, recs, macro=True)
    assert micro.recall == 0.25 and macro.recall == 0.5
    assert macro.averaging == "macro"


def test_oracle_equivalence():
    rng = random.Random(1234)
    for _ in range(300):
        preds, golds = random_instance(rng)
        report = score(preds, golds)
        tp = fp = fn = disc = 0
        for p, g in zip(preds, golds):
            counts = brute_force_counts([(x.attribute, x.value) for x in p.pairs],
                                        [(x.attribute, x.value) for x in g.pairs])
            tp, fp, fn, disc = tp + counts[0], fp + counts[1], fn + counts[2], disc + counts[3]
        c = report.counts
        assert (c.tp, c.fp, c.fn, c.discarded) == (tp, fp, fn, disc)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_invariants(seed):
    rng = random.Random(seed)
    preds, golds = random_instance(rng)
    report = score(preds, golds)
    p, r, f = report.precision, report.recall, report.f1
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1
    if p > 0 and r > 0:
        assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12
        assert f == pytest.approx(2 * p * r / (p + r), abs=1e-9)
    # discard monotonicity
    raw = score(preds, golds, discard=False)
    assert report.precision >= raw.precision and report.recall == raw.recall
    # permutation invariance
    shuffled_preds = [PredictionSet(x.record_id, rng.sample(x.pairs, len(x.pairs))) for x in preds]
    rng.shuffle(shuffled_preds)
    shuffled_golds = list(golds)
    rng.shuffle(shuffled_golds)
    again = score(shuffled_preds, shuffled_golds)
    assert (again.precision, again.recall, again.f1) == (p, r, f)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ensemble_recall_dominance(seed):
    rng = random.Random(seed)
    _, golds = random_instance(rng)
    members = [[PredictionSet(g.id, random_pairs(rng, rng.randint(0, 6))) for g in golds] for _ in range(3)]
    ensemble = [ensemble_combine(list(sets)) for sets in zip(*members)]
    best = max(score(m, golds).recall for m in members)
    assert score(ensemble, golds).recall >= best


# -- cross-dataset matrix ---------------------------------------------------------

def test_cross_eval_mock_shape():
    corpora = {name: synthetic_corpus(15, seed=i, prefix=name) for i, name in enumerate(["ae", "oa", "mave"])}
    models = {name: train_strategy(Strategy.END2END, recs) for name, recs in corpora.items()}
    matrix = cross_eval(models, corpora)
    assert matrix.names == ["ae", "oa", "mave"]
    for i in range(3):
        for j in range(3):
            assert matrix.cells[i][j] == (100.0 if i == j else 0.0)
    assert CrossEvalMatrix.from_tsv(matrix.to_tsv()) == matrix


def test_cross_eval_missing_split():
    with pytest.raises(ConfigurationError):
        cross_eval({"a": None}, {})


# -- cost report --------------------------------------------------------------------

def _cost(train, infer=1.0, memory=1, pairs=1.0):
    return StrategyCost(train, infer, memory, pairs)


def test_cost_report_normalization():
    report = build_cost_report({"pipeline": _cost(39.0, 2.7, 2, 2.3), "end2end": _cost(10.0, 1.0, 1, 1.0)})
    assert report.normalized["end2end"] == {m: 1.0 for m in report.normalized["end2end"]}
    assert report.normalized["pipeline"]["train_cost"] == pytest.approx(3.9)
    assert report.normalized["pipeline"]["memory"] == 2.0
    assert report.raw["pipeline"]["train_cost"] == 39.0
    assert "pipeline\t" in report.to_tsv()


def test_cost_report_zero_reference_flagged():
    report = build_cost_report({"end2end": _cost(0.0), "multitask": _cost(2.0)})
    assert report.normalized["multitask"]["train_cost"] is None
    assert report.flags


def test_cost_report_requires_end2end():
    with pytest.raises(ConfigurationError):
        build_cost_report({"pipeline": _cost(1.0)})
