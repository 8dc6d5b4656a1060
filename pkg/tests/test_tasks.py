import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textsignals.anomaly import AnomalyParams, detect_anomalies
from textsignals.core import Document, Feed, Signal, make_time_series, tick_range
from textsignals.dataset import SignalsDataset
from textsignals.tasks import (
    TaskError,
    TaskExample,
    audit_vocabulary,
    balance_sample,
    build_vocab,
    build_vocab_from_examples,
    chrono_split,
    evaluate,
    featurize,
    featurize_many,
    make_examples,
    random_target,
    random_uniform,
    read_examples,
    write_examples,
)

D = dt.date
START = D(2023, 1, 1)


def toy_dataset(n_ticks=10, qids=("Q1", "Q2"), spikes=None):
    spikes = spikes or {}
    end = START + dt.timedelta(days=n_ticks)
    signals = {}
    for q in qids:
        values = [1.0 + (i % 2) for i in range(n_ticks)]
        for i in spikes.get(q, ()):
            values[i] = 50.0
        buckets = {}
        for i, t in enumerate(tick_range(START, end)):
            buckets[t] = [Document(f"{q}-{i}-{j}", f"{t.isoformat()}T0{j}:00:00Z", f"{q} headline {i} part {j}")
                          for j in range(i % 3)]
        signals[q] = Signal(q, q).add_series(make_time_series("news_volume", START, values)) \
            .add_feed(Feed("stories", buckets))
    return SignalsDataset({"name": "toy", "start": START.isoformat(), "end": end.isoformat()}, signals)


def ex(qid, day, label, text="x"):
    return TaskExample(qid, START + dt.timedelta(days=day), text, label, "news_volume")


# ---------------------------------------------------------------------------
# make_examples


def test_same_day_labels_and_text():
    ds = toy_dataset(spikes={"Q1": [6]})
    examples = make_examples(ds, "news_volume", AnomalyParams(2.0))
    assert len(examples) == 20
    q1 = [e for e in examples if e.qid == "Q1"]
    assert [e.label for e in q1] == [0] * 6 + [1] + [0] * 3
    assert q1[2].text == "Q1 headline 2 part 0\nQ1 headline 2 part 1"
    assert q1[0].text == ""


def test_horizon_drops_boundary():
    ds = toy_dataset(spikes={"Q1": [6]})
    examples = make_examples(ds, "news_volume", AnomalyParams(2.0), horizon=1)
    assert sum(e.qid == "Q1" for e in examples) == 9
    q1 = [e for e in examples if e.qid == "Q1"]
    # day 5's headlines predict day 6's spike
    assert [e.tick for e in q1 if e.label] == [START + dt.timedelta(days=5)]
    assert max(e.tick for e in q1) == START + dt.timedelta(days=8)


def test_labels_match_anomaly_module(fixture_dataset):
    params = AnomalyParams(3.0)
    examples = make_examples(fixture_dataset, "news_volume", params)
    for signal in fixture_dataset:
        flags = detect_anomalies(signal.series["news_volume"], params)
        got = {e.tick: e.label for e in examples if e.qid == signal.id}
        assert got == {t: int(flags[t]) for t in flags.ticks}


def test_unknown_target():
    with pytest.raises(TaskError, match="stock"):
        make_examples(toy_dataset(), "stock")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5), st.integers(6, 20))
def test_positive_horizon_label_is_shift(h, n):
    ds = toy_dataset(n, qids=("Q1",), spikes={"Q1": [n - 1]})
    base = make_examples(ds, "news_volume", AnomalyParams(2.0), 0)
    shifted = make_examples(ds, "news_volume", AnomalyParams(2.0), h)
    assert len(shifted) == n - h
    for i, e in enumerate(shifted):
        assert e.label == base[i + h].label
        assert e.text == base[i].text


def test_examples_jsonl_round_trip(tmp_path):
    examples = make_examples(toy_dataset(), "news_volume")
    write_examples(examples, tmp_path / "ex.jsonl")
    assert read_examples(tmp_path / "ex.jsonl") == examples


# ---------------------------------------------------------------------------
# splits


def hundred_ticks():
    return [ex(q, d, d % 7 == 0) for q in ("Q1", "Q2") for d in range(100)]


def test_cuts_at_80_and_90():
    splits = chrono_split(hundred_ticks())
    assert splits.val_start == START + dt.timedelta(days=80)
    assert splits.test_start == START + dt.timedelta(days=90)
    assert (len(splits.train), len(splits.val), len(splits.test)) == (160, 20, 20)
    assert max(e.tick for e in splits.train) < min(e.tick for e in splits.val)
    assert max(e.tick for e in splits.val) < min(e.tick for e in splits.test)
    splits.check_order()


def test_same_tick_is_error():
    with pytest.raises(TaskError):
        chrono_split([ex("Q1", 0, 0), ex("Q2", 0, 1)])


def test_fractions_must_sum_to_one():
    with pytest.raises(TaskError):
        chrono_split(hundred_ticks(), 0.8, 0.1, 0.2)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 200), st.integers(1, 4))
def test_split_sizes_near_fractions(n_ticks, n_signals):
    examples = [ex(f"Q{q}", d, 0) for q in range(1, n_signals + 1) for d in range(n_ticks)]
    s = chrono_split(examples)
    total = len(examples)
    assert len(s.train) + len(s.val) + len(s.test) == total
    assert s.train and s.val and s.test
    s.check_order()
    if n_ticks >= 20:
        for part, frac in ((s.train, 0.8), (s.val, 0.1), (s.test, 0.1)):
            assert abs(len(part) - frac * total) <= n_signals


def test_per_entity_split():
    examples = [ex("Q1", d, 0) for d in range(10)] + [ex("Q2", d, 0) for d in range(50, 60)]
    s = chrono_split(examples, per_entity=True)
    assert s.per_entity
    assert sum(e.qid == "Q1" for e in s.train) == 8
    assert sum(e.qid == "Q2" for e in s.test) == 1
    s.check_order()


# ---------------------------------------------------------------------------
# balance_sample


def pool(n_pos, n_neg):
    return [ex("Q1", i, 1) for i in range(n_pos)] + [ex("Q2", i, 0) for i in range(n_neg)]


def test_balance_with_replacement_flag():
    sample = balance_sample(pool(50, 5000), 100, 100, seed=3)
    labels = [e.label for e in sample]
    assert labels.count(1) == 100 and labels.count(0) == 100
    assert sample.stats["positive_with_replacement"] is True
    assert sample.stats["negative_with_replacement"] is False
    negatives = [e for e in sample if e.label == 0]
    assert len(set(negatives)) == 100
    assert len(set(e for e in sample if e.label == 1)) <= 50


def test_balance_negatives_only():
    sample = balance_sample(pool(0, 30), 0, 10, seed=0)
    assert len(sample) == 10 and all(e.label == 0 for e in sample)


def test_balance_absent_class_named():
    with pytest.raises(TaskError, match="positive"):
        balance_sample(pool(0, 30), 5, 5)


def test_balance_reproducible():
    a = balance_sample(pool(20, 80), 10, 10, seed=9).examples
    b = balance_sample(pool(20, 80), 10, 10, seed=9).examples
    c = balance_sample(pool(20, 80), 10, 10, seed=10).examples
    assert a == b
    assert a != c


def test_balance_is_shuffled():
    labels = [e.label for e in balance_sample(pool(200, 200), 100, 100, seed=1)]
    assert labels != sorted(labels, reverse=True)


# ---------------------------------------------------------------------------
# vocabulary and features


def test_vocab_hand_enumerated():
    vocab = build_vocab(["the cat", "a cat dog"])
    assert vocab.tokens == ["cat", "dog"]
    assert featurize("cat cat", vocab).on_indices == (0,)


def test_stopwords_only_empty_vector():
    vocab = build_vocab(["the cat"])
    assert featurize("the and of it", vocab).on_indices == ()


def test_tokenizer_rules():
    vocab = build_vocab(["U.S. stocks rose 5% on Monday's news; x y z"])
    assert vocab.tokens == ["monday", "news", "rose", "stocks"]


def test_empty_corpus():
    with pytest.raises(TaskError):
        build_vocab([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(alphabet="abcdefg ", max_size=30), min_size=1, max_size=20), st.integers(1, 15))
def test_vocab_size_bound(texts, size):
    assert len(build_vocab(texts, size)) <= size


def test_df_ordering_ties_lexicographic():
    vocab = build_vocab(["zebra apple", "apple mango", "zebra"], size=2)
    assert vocab.tokens == ["apple", "zebra"]


def test_featurize_many_matches_featurize():
    vocab = build_vocab(["cat dog", "dog bird", "fish"])
    texts = ["cat", "bird dog dog", "nothing"]
    X = featurize_many(texts, vocab).toarray()
    for row, text in zip(X, texts):
        assert tuple(np.flatnonzero(row)) == featurize(text, vocab).on_indices


def test_leakage_audit():
    splits = chrono_split(hundred_ticks())
    audit_vocabulary(build_vocab_from_examples(splits.train), splits)
    with pytest.raises(TaskError):
        audit_vocabulary(build_vocab_from_examples(splits.train + splits.val), splits)
    with pytest.raises(TaskError):
        audit_vocabulary(build_vocab(["no provenance"]), splits)


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_hand_confusion():
    r = evaluate([1, 1, 0, 0], [1, 0, 1, 0])
    assert (r.precision, r.recall, r.f1, r.pos_rate) == (0.5, 0.5, 0.5, 0.5)
    assert (r.tp, r.fp, r.fn, r.tn) == (1, 1, 1, 1)


def test_evaluate_perfect():
    r = evaluate([1, 0, 1], [1, 0, 1])
    assert r.precision == r.recall == r.f1 == 1.0


def test_evaluate_zero_division():
    r = evaluate([0, 0, 0], [1, 0, 1])
    assert (r.precision, r.recall, r.f1, r.pos_rate) == (0.0, 0.0, 0.0, 0.0)


def test_evaluate_errors():
    with pytest.raises(ValueError):
        evaluate([1, 0], [1])
    with pytest.raises(ValueError):
        evaluate([2, 0], [1, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50), st.randoms())
def test_evaluate_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate([p for p, _ in pairs], [g for _, g in pairs])
    b = evaluate([p for p, _ in shuffled], [g for _, g in shuffled])
    assert a == b
    assert 0 <= a.f1 <= 1
    if a.precision + a.recall:
        assert math.isclose(a.f1, 2 * a.precision * a.recall / (a.precision + a.recall))


def test_random_baselines():
    assert random_target(100, 0.0, seed=1).sum() == 0
    assert random_target(100, 1.0, seed=1).sum() == 100
    assert np.array_equal(random_uniform(1000, seed=4), random_uniform(1000, seed=4))
    assert 400 < random_uniform(1000, seed=4).sum() < 600
    with pytest.raises(ValueError):
        random_target(0, 0.5)
    with pytest.raises(ValueError):
        random_target(10, 1.5)


def test_random_uniform_within_binomial_bounds():
    n, p = 50_000, 0.01
    gold = np.zeros(n, dtype=int)
    gold[:500] = 1
    r = evaluate(random_uniform(n, seed=0), gold)
    n_pos = 500
    assert abs(r.recall - 0.5) <= 3 * math.sqrt(0.25 / n_pos)
    n_pred = r.tp + r.fp
    assert abs(r.precision - p) <= 3 * math.sqrt(p * (1 - p) / n_pred)


def test_deleting_future_text_keeps_labels():
    ds = toy_dataset(12, qids=("Q1",), spikes={"Q1": [7]})
    before = make_examples(ds, "news_volume", AnomalyParams(2.0), horizon=2)
    signal = ds["Q1"]
    emptied = Feed("stories", {t: [] for t in signal.ticks})
    stripped = Signal("Q1", "Q1").add_series(signal.series["news_volume"]).add_feed(emptied)
    after = make_examples(SignalsDataset(ds.metadata, {"Q1": stripped}), "news_volume", AnomalyParams(2.0), horizon=2)
    assert [e.label for e in after] == [e.label for e in before]
