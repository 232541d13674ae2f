import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridrules import (Antecedent, BinaryDataset, ConfigError, DataError, Prefix, SearchConfig,
                         mine_antecedents, optimize)
from hybridrules.bits import from_mask
from hybridrules.blackbox import (HybridModel, evaluate, load_predictions, predict, predict_all,
                                  specialization_weights, train_builtin, weighted_accuracy,
                                  weighted_log_loss, write_predictions, write_weights)
from hybridrules.rules import Rule

import oracles


def test_load_predictions_formats(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("1\n0\n0\n1\n")
    ps = load_predictions(p, 4)
    assert ps.labels.tolist() == [1, 0, 0, 1]
    c = tmp_path / "p.csv"
    c.write_text("id,prediction\n0,1\n1,0\n")
    assert load_predictions(c, 2).labels.tolist() == [1, 0]


def test_load_predictions_errors(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("1\n0\n0\n")
    with pytest.raises(DataError):
        load_predictions(p, 4)
    p.write_text("1\n0.7\n")
    with pytest.raises(DataError, match="non-binary prediction"):
        load_predictions(p)
    with pytest.raises(DataError):
        load_predictions(tmp_path / "missing.txt")


def test_write_predictions_roundtrip(tmp_path):
    write_predictions(tmp_path / "o.txt", [0, 1, 1])
    assert load_predictions(tmp_path / "o.txt", 3).labels.tolist() == [0, 1, 1]


def test_weights_examples():
    w = specialization_weights(np.array([1, 0, 1, 0], dtype=bool), 0.0)
    assert np.allclose(w.weights, 0.25, atol=0)
    w = specialization_weights(np.array([1, 1, 0, 0], dtype=bool), 1.0)
    e = math.e
    assert w.weights[0] == pytest.approx(1 / (2 + 2 * e), abs=1e-15)
    assert w.weights[3] == pytest.approx(e / (2 + 2 * e), abs=1e-15)
    assert w.weights[0] == pytest.approx(0.134470, abs=1e-6) and w.weights[3] == pytest.approx(0.365530, abs=1e-6)
    assert w.ratio([1, 1, 0, 0]) == pytest.approx(2.72, abs=0.01)
    w2 = specialization_weights(np.array([1, 0, 0], dtype=bool), 2.0)
    assert w2.ratio([1, 0, 0]) == pytest.approx(7.39, abs=0.01)


def test_weights_from_int_mask():
    w = specialization_weights(0b0011, 1.0, n=4)
    assert w.weights[0] < w.weights[2]
    with pytest.raises(ConfigError):
        specialization_weights(0b1, 1.0)
    with pytest.raises(ConfigError):
        specialization_weights(np.ones(3, dtype=bool), -1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0, 0.1, 1, 2, 5, 10]))
def test_weight_invariants(seed, alpha):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 300))
    cap = rng.random(m) < rng.random()
    w = specialization_weights(cap, alpha).weights
    assert abs(w.sum() - 1) <= 1e-12
    assert (w >= 0).all()
    if 0 < cap.sum() < m:
        assert len(set(w.tolist())) == (1 if alpha == 0 else 2)
        assert abs(w[~cap][0] / w[cap][0] - math.exp(alpha)) <= 1e-12 * math.exp(alpha)
    # weight on the uncaptured part never shrinks as alpha grows
    tot = [specialization_weights(cap, a).weights[~cap].sum() for a in (0, 0.1, 1, 2, 5, 10)]
    assert all(b >= a - 1e-15 for a, b in zip(tot, tot[1:]))


def test_write_weights(tmp_path):
    w = specialization_weights(np.array([1, 0, 0, 1, 1], dtype=bool), 1.0)
    write_weights(tmp_path / "w.csv", w)
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "index,weight"
    assert sum(float(l.split(",")[1]) for l in lines[1:]) == pytest.approx(1.0, abs=1e-12)


def dataset(X, y):
    X = np.asarray(X, dtype=np.uint8)
    return BinaryDataset(X, y, [f"f{j}" for j in range(X.shape[1])])


def test_builtin_separable():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, size=(200, 5))
    y = (X[:, 0] | X[:, 2]).astype(np.uint8)
    d = dataset(X, y)
    model = train_builtin(d)
    assert (model.predict(d).labels == y).all()
    assert model.predict_row(X[3], d.feature_names) == y[3]


def test_builtin_constant_predictor(caplog):
    d = dataset([[0, 1], [1, 1], [1, 0]], [1, 1, 1])
    with caplog.at_level("WARNING"):
        model = train_builtin(d)
    assert "single class" in caplog.text
    assert model.predict(d).labels.tolist() == [1, 1, 1]


def test_builtin_concentrated_weights_fit_the_focus_region_better():
    rng = np.random.default_rng(4)
    X, y = oracles.random_instance(rng, m=400, d=6, noise=0.6)
    d = dataset(X, y)
    focus = X[:, 0] == 1
    uniform = train_builtin(d)
    focused = train_builtin(d, specialization_weights(~focus, 6.0))
    w_focus = focus.astype(float)
    assert weighted_log_loss(focused, d, w_focus) <= weighted_log_loss(uniform, d, w_focus)


def test_builtin_is_deterministic_and_serialises():
    rng = np.random.default_rng(1)
    X, y = oracles.random_instance(rng, m=150, d=5)
    d = dataset(X, y)
    pool = mine_antecedents(d, 2, 0.05, 30)
    a = train_builtin(d, pool=pool, seed=3)
    b = train_builtin(d, pool=pool, seed=3)
    assert np.array_equal(a.coef, b.coef)
    from hybridrules.blackbox import BuiltinModel
    c = BuiltinModel.from_params(json.loads(json.dumps(a.to_params())))
    assert np.array_equal(c.predict(d).labels, a.predict(d).labels)
    assert [c.predict_row(x, d.feature_names) for x in d.X] == a.predict(d).labels.tolist()


def hybrid(rules, d, **kw):
    p = Prefix().with_rules(rules, d)
    kw.setdefault("mode", "post")
    return HybridModel.from_prefix(p, d.feature_names, lam=0.01, beta=0.001, min_coverage=0.0, **kw)


def test_predict_routing():
    d = dataset([[1, 0], [0, 1], [0, 0]], [1, 0, 1])
    m = hybrid([Rule(Antecedent.of(0), 1), Rule(Antecedent.of(1), 0)], d)
    assert predict(m, (0, 1), d.feature_names) == (0, "interpretable")
    assert predict(m, (0, 0), d.feature_names, bb_label=1) == (1, "blackbox")
    with pytest.raises(DataError):
        predict(m, (0, 0), d.feature_names)


def test_evaluate_examples():
    d = dataset([[1], [1], [1], [1]], [1, 1, 0, 1])
    m = hybrid([Rule(Antecedent.of(0), 1)], d)
    r = evaluate(m, d)
    assert r["transparency"] == 1.0 and r["accuracy"] == 0.75
    perfect = hybrid([Rule(Antecedent.of(0), 1)], dataset([[1], [1]], [1, 1]))
    r = evaluate(perfect, dataset([[1], [1]], [1, 1]))
    assert (r["accuracy"], r["transparency"]) == (1.0, 1.0)
    d = dataset([[0]] * 5, [1, 1, 1, 1, 0])
    empty = hybrid([], d)
    r = evaluate(empty, d, np.array([1, 1, 1, 1, 1]))
    assert r["accuracy"] == pytest.approx(0.8) and r["transparency"] == 0.0
    d = dataset([[1], [1], [0], [0]], [1, 0, 1, 0])
    m = hybrid([Rule(Antecedent.of(0), 1)], d)
    r = evaluate(m, d, np.array([0, 0, 0, 0]))
    assert r == {"accuracy": 0.5, "transparency": 0.5, "interpretable_accuracy": 0.5,
                 "blackbox_accuracy": 0.5, "n": 4}


def test_model_roundtrip_and_schema(tmp_path):
    d = dataset([[1, 0], [0, 1], [0, 0]], [1, 0, 1])
    m = hybrid([Rule(Antecedent.of((0, True), 1), 0)], d, metadata={"objective": 0.5})
    m.save(tmp_path / "m.json")
    back = HybridModel.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["schema_version"] = 99
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="schema version"):
        HybridModel.load(tmp_path / "bad.json")
    doc["schema_version"] = 1
    doc["rules"][0]["consequent"] = 3
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        HybridModel.load(tmp_path / "bad.json")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["pre", "post", "pre-nocollab", "corels"]),
       st.sampled_from([0.0, 0.3, 0.7]))
def test_optimized_models_route_like_the_prefix(seed, mode, psi):
    rng = np.random.default_rng(seed)
    X, y = oracles.random_instance(rng, m=int(rng.integers(20, 100)), d=4)
    d = dataset(X, y)
    pool = mine_antecedents(d, 2, 0.05, 20)
    bb = X[:, 1].astype(np.uint8)
    res = optimize(d, pool, cfg=SearchConfig(mode=mode, lam=0.01, min_coverage=psi, max_length=3),
                   bb_preds=bb)
    m = HybridModel.from_prefix(res.prefix, d.feature_names, mode=mode, lam=0.01, beta=res.beta,
                                min_coverage=psi)
    labels, routed = predict_all(m, d, bb)
    assert evaluate(m, d, bb)["transparency"] >= psi
    for i in range(d.n):
        hit, label, _ = res.prefix.assign(d.X[i])
        assert hit == routed[i]
        assert labels[i] == (label if hit else bb[i])
        assert predict(m, d.X[i], d.feature_names, bb_label=int(bb[i])) == (
            labels[i], "interpretable" if hit else "blackbox")
    assert np.array_equal(from_mask(res.prefix.captured, d.n), routed)


def test_weighted_accuracy():
    assert weighted_accuracy([1, 0, 1], [1, 1, 1], [0.5, 0.25, 0.25]) == pytest.approx(0.75)
