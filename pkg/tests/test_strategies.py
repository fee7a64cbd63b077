import pytest

from avgen import backend
from avgen.backend import BackendConfig, ConfigurationError
from avgen.ingest import ProductRecord
from avgen.pairs import AttrValuePair, normalize_pair
from avgen.serdes import Strategy, Task, TaskExample
from avgen.strategies import (
    Diagnostics,
    EnsemblePredictor,
    PredictionSet,
    build_corpus,
    e2e_predict,
    ensemble_combine,
    load_predictor,
    multitask_predict,
    pipeline_predict,
    predict,
    probe_strategy,
    read_predictions,
    save_predictor,
    train_strategy,
    write_predictions,
)
from tests.helpers import FIG1_PAIRS, FIG1_TEXT, figure1_record, synthetic_corpus


def _mock(examples):
    return backend.train(examples, BackendConfig())


def _fig1_models(strategy):
    corpora, _ = build_corpus([figure1_record()], strategy)
    return {role: _mock(ex) for role, ex in corpora.items()}


def test_build_corpus_counts():
    corpora, report = build_corpus([figure1_record()], Strategy.MULTITASK)
    assert list(corpora) == ["multitask"] and len(corpora["multitask"]) == 4
    assert sum(e.source.startswith("extract value: ") for e in corpora["multitask"]) == 1
    corpora, _ = build_corpus([figure1_record()], Strategy.END2END)
    assert len(corpora["end2end"]) == 1
    corpora, _ = build_corpus([figure1_record()], Strategy.PIPELINE)
    assert (len(corpora["pipeline-ve"]), len(corpora["pipeline-ag"])) == (1, 3)
    assert {e.task for e in corpora["pipeline-ve"]} == {Task.VE}
    assert {e.task for e in corpora["pipeline-ag"]} == {Task.AG}


def test_build_corpus_empty():
    with pytest.raises(ConfigurationError):
        build_corpus([], Strategy.END2END)


def test_pipeline_figure1():
    m = _fig1_models(Strategy.PIPELINE)
    pred = pipeline_predict(m["pipeline-ve"], m["pipeline-ag"], FIG1_TEXT, "fig1")
    assert pred.pairs == list(FIG1_PAIRS)


def test_multitask_figure1():
    m = _fig1_models(Strategy.MULTITASK)
    assert multitask_predict(m["multitask"], FIG1_TEXT).pairs == list(FIG1_PAIRS)


def test_e2e_figure1():
    m = _fig1_models(Strategy.END2END)
    assert e2e_predict(m["end2end"], FIG1_TEXT).pairs == list(FIG1_PAIRS)


def test_pipeline_empty_ve_output():
    ve = _mock([TaskExample("other", "x", Task.VE)])
    ag = _mock([TaskExample("other", "x", Task.AG)])
    pred = pipeline_predict(ve, ag, FIG1_TEXT)
    assert pred.pairs == [] and pred.diagnostics == Diagnostics()


def test_pipeline_duplicate_values_one_ag_call():
    ve = _mock([TaskExample(FIG1_TEXT, "Leather | Leather", Task.VE)])
    calls = []
    ag = _mock([TaskExample(FIG1_TEXT.replace("Leather", "<hl> Leather <hl>"), "Band Material", Task.AG)])
    original = backend.generate

    def spy(model, sources):
        if model is ag:
            calls.append(list(sources))
        return original(model, sources)

    backend.generate = spy
    try:
        pred = pipeline_predict(ve, ag, FIG1_TEXT)
    finally:
        backend.generate = original
    assert calls == [[FIG1_TEXT.replace("Leather", "<hl> Leather <hl>")]]
    assert pred.pairs == [AttrValuePair("Band Material", "Leather")]
    assert pred.diagnostics.duplicates_removed == 1


def test_multitask_value_not_in_text_dropped():
    model = _mock([TaskExample("extract value: " + FIG1_TEXT, "Fossil | Titanium", Task.VE),
                   TaskExample("generate attribute: <hl> Fossil <hl>" + FIG1_TEXT[6:], "Brand", Task.AG)])
    pred = multitask_predict(model, FIG1_TEXT)
    assert pred.pairs == [AttrValuePair("Brand", "Fossil")]
    assert pred.diagnostics.values_not_found == 1


def test_multitask_unseen_text():
    m = _fig1_models(Strategy.MULTITASK)
    assert multitask_predict(m["multitask"], "some other product").pairs == []


def test_e2e_garbage_and_empty():
    model = _mock([TaskExample("a", "garbage", Task.E2E), TaskExample("b", "", Task.E2E)])
    p = e2e_predict(model, "a")
    assert p.pairs == [] and p.diagnostics.malformed == 1
    p = e2e_predict(model, "b")
    assert p.pairs == [] and p.diagnostics.malformed == 0


def test_e2e_dedups_under_normalization():
    model = _mock([TaskExample("a", "attribute: Brand, value: Acme | attribute: brand, value: ACME.", Task.E2E)])
    p = e2e_predict(model, "a")
    assert p.pairs == [AttrValuePair("Brand", "Acme")] and p.diagnostics.duplicates_removed == 1


def test_ensemble_combine():
    a = PredictionSet("r", [AttrValuePair("Brand", "Fossil")], Diagnostics(malformed=1))
    b = PredictionSet("r", [AttrValuePair("brand", "fossil"), AttrValuePair("Color", "Brown")], Diagnostics(malformed=2))
    c = ensemble_combine([a, b])
    assert len(c.pairs) == 2 and c.diagnostics.malformed == 3
    assert ensemble_combine([PredictionSet("r"), PredictionSet("r")]).pairs == []
    d = PredictionSet("r", [AttrValuePair("a", "1"), AttrValuePair("b", "2")])
    e = PredictionSet("r", [AttrValuePair("c", "3"), AttrValuePair("d", "4"), AttrValuePair("e", "5")])
    assert len(ensemble_combine([d, e]).pairs) == 5
    with pytest.raises(ValueError):
        ensemble_combine([a, PredictionSet("other")])


def test_ensemble_cannot_nest():
    inner = EnsemblePredictor([train_strategy(Strategy.END2END, [figure1_record()])])
    with pytest.raises(ConfigurationError):
        EnsemblePredictor([inner])


@pytest.mark.parametrize("strategy", list(Strategy))
def test_mock_closure_and_idempotence(strategy):
    records = synthetic_corpus(40, seed=11)
    predictor = train_strategy(strategy, records)
    first = predict(predictor, records)
    for pred, rec in zip(first, records):
        assert {normalize_pair(p) for p in pred.pairs} == {normalize_pair(p) for p in rec.pairs}
    assert [p.to_dict() for p in predict(predictor, records)] == [p.to_dict() for p in first]


def test_pipeline_pair_bound():
    records = synthetic_corpus(30, seed=2)
    predictor = train_strategy(Strategy.PIPELINE, records)
    for pred, rec in zip(predict(predictor, records), records):
        n_values = len({p.value for p in rec.pairs})
        assert len(pred.pairs) <= n_values


def test_gold_value_absent_from_text_is_missed_by_two_stage():
    rec = ProductRecord("r", "c", "Blue cotton shirt", (AttrValuePair("Color", "Blue"), AttrValuePair("Brand", "Zed")))
    for strategy in (Strategy.PIPELINE, Strategy.MULTITASK):
        pred = predict(train_strategy(strategy, [rec]), [rec])[0]
        assert pred.pairs == [AttrValuePair("Color", "Blue")]
        assert pred.diagnostics.values_not_found == 1
    pred = predict(train_strategy(Strategy.END2END, [rec]), [rec])[0]
    assert len(pred.pairs) == 2


@pytest.mark.parametrize("strategy", list(Strategy))
def test_save_load_predictor(strategy, tmp_path):
    records = synthetic_corpus(10, seed=5)
    predictor = train_strategy(strategy, records, records[:3])
    paths = save_predictor(predictor, tmp_path)
    assert len(paths) == (2 if strategy is Strategy.PIPELINE else 1)
    for rel in paths.values():
        assert (tmp_path / rel / "manifest.json").exists()
    again = load_predictor(tmp_path)
    assert [p.to_dict() for p in predict(again, records)] == [p.to_dict() for p in predict(predictor, records)]


def test_prediction_file_round_trip(tmp_path):
    preds = [PredictionSet("a", [AttrValuePair("x", "y")], Diagnostics(malformed=2), "end2end"), PredictionSet("b")]
    write_predictions(preds, tmp_path / "p.jsonl")
    line = (tmp_path / "p.jsonl").read_text().splitlines()[0]
    assert line.startswith('{"id": "a", "strategy": "end2end", "pairs": [{"attribute": "x", "value": "y"}], "diagnostics"')
    assert [p.to_dict() for p in read_predictions(tmp_path / "p.jsonl")] == [p.to_dict() for p in preds]


def test_probe_memory_ratio_and_inference_order():
    records = synthetic_corpus(200, seed=1)
    probes = {s: probe_strategy(train_strategy(s, records), records, repeats=5) for s in Strategy}
    assert probes[Strategy.PIPELINE].memory == 2 * probes[Strategy.END2END].memory
    assert probes[Strategy.MULTITASK].memory == probes[Strategy.END2END].memory
    assert probes[Strategy.PIPELINE].infer_seconds_per_1k > probes[Strategy.END2END].infer_seconds_per_1k
    assert all(p.train_seconds > 0 for p in probes.values())
