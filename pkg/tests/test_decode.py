import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_model, utt
from oracles import brute_force_best, sequence_logprob
from paraug.decode import FilterOptions, Hypothesis, beam_search, filter_candidates, sample_hypotheses
from paraug.seq2seq import initial_state, step_decoder
from paraug.textcore import BOS_ID, EOS_ID


def peaky_model(seed, n_out=0, scale=1.5):
    """Random model with sharper distributions than the default init."""
    m = toy_model(n_in=3, n_out=n_out, dim=3, hidden=4, seed=seed)
    rng = np.random.default_rng(seed)
    for k in m.params:
        m.params[k] = rng.normal(scale=scale, size=m.params[k].shape)
    return m


@pytest.mark.parametrize("seed", range(15))
def test_beam_matches_brute_force(seed):
    m = peaky_model(seed)
    assert len(m.output_vocab) == 4
    best_score, best_ids = brute_force_best(m, [4, 5], 3)
    (top,) = beam_search(m, [4, 5], beam_width=64, n_best=1, max_len=3)
    assert top.token_ids == best_ids
    assert top.score == pytest.approx(best_score, abs=1e-12)


def test_beam_one_is_greedy():
    for seed in range(10):
        m = peaky_model(seed, n_out=3)
        state = initial_state(m, [6, 4])
        prev, ids = BOS_ID, []
        for _ in range(6):
            p, state = step_decoder(m, state, prev)
            prev = int(np.argmax(p[0]))
            ids.append(prev)
            if prev == EOS_ID:
                break
        (h,) = beam_search(m, [6, 4], beam_width=1, n_best=1, max_len=6)
        assert list(h.token_ids) == ids
        assert h.finished == (ids[-1] == EOS_ID)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**4), st.integers(1, 6), st.integers(1, 5))
def test_beam_invariants(seed, beam, max_len):
    m = peaky_model(seed, n_out=2, scale=1.0)
    hyps = beam_search(m, [4, 6], beam_width=beam, n_best=beam, max_len=max_len)
    assert 1 <= len(hyps) <= beam
    scores = [h.score for h in hyps]
    assert scores == sorted(scores, reverse=True)
    for h in hyps:
        assert h.score <= 0
        assert len(h.token_ids) <= max_len
        assert EOS_ID not in h.token_ids[:-1]
        assert h.finished == (h.token_ids[-1] == EOS_ID)
        assert h.score == pytest.approx(sequence_logprob(m, [4, 6], h.token_ids), abs=1e-9)
    assert hyps == beam_search(m, [4, 6], beam_width=beam, n_best=beam, max_len=max_len)


def test_beam_argument_validation():
    m = toy_model()
    for kw in ({"beam_width": 0}, {"n_best": 3, "beam_width": 2}, {"max_len": 0}):
        with pytest.raises(ValueError):
            beam_search(m, [4], **kw)


def test_length_normalize_ranking():
    m = peaky_model(3, n_out=2, scale=1.0)
    raw = beam_search(m, [4], beam_width=6, n_best=6, max_len=5)
    norm = beam_search(m, [4], beam_width=6, n_best=6, max_len=5, length_normalize=True)
    # same search, so every hypothesis keeps its raw score
    for h in norm:
        assert h.score == pytest.approx(sequence_logprob(m, [4], h.token_ids), abs=1e-9)
    assert [h.score for h in raw] == sorted((h.score for h in raw), reverse=True)
    keys = [h.score / len(h.token_ids) for h in norm]
    assert keys == sorted(keys, reverse=True)


def test_sampling_is_seeded():
    m = peaky_model(1, n_out=2)
    a = sample_hypotheses(m, [4], 5, 6, np.random.default_rng(3))
    b = sample_hypotheses(m, [4], 5, 6, np.random.default_rng(3))
    assert a == b and len(a) == 5


# ---------------------------------------------------------------- filtering

def filter_setup():
    # output ids: o0=4, o1=5, <City_1>=6
    m = toy_model(n_out=2, extra_out=("<City_1>",), slot_tokens=("<City_1>",))
    original = utt("o0 paris", [("City", 1, 2)])
    bindings = (("City", ("paris",)),)
    return m, original, bindings


def hyp(ids, score, finished=True):
    return Hypothesis(tuple(ids) + ((EOS_ID,) if finished else ()), score, finished)


def test_filter_reasons():
    m, original, bindings = filter_setup()
    hyps = [
        hyp([5, 6], -0.5),           # accepted: "o1 paris"
        hyp([4, 6], -0.1),           # identity
        hyp([5, 4], -0.7),           # missing-slot
        hyp([5, 6], -0.9, False),    # unfinished
        hyp([3, 6], -1.0),           # <unk>
        hyp([6, 6], -1.1),           # duplicate index
    ]
    acc, stats = filter_candidates(hyps, bindings, original, m)
    assert [c.utterance.tokens for c in acc] == [("o1", "paris")]
    assert acc[0].utterance.slots[0].start == 1
    assert stats == {"identity": 1, "missing-slot": 1, "unfinished": 1, "invalid-token": 1,
                     "duplicate-index": 1}
    assert sum(stats.values()) + len(acc) == len(hyps)


def test_filter_keeps_identity_when_asked():
    m, original, bindings = filter_setup()
    acc, stats = filter_candidates([hyp([4, 6], -0.1)], bindings, original, m,
                                   FilterOptions(drop_identity=False))
    assert len(acc) == 1 and not stats


def test_filter_dedup_keeps_best():
    m, original, bindings = filter_setup()
    acc, stats = filter_candidates([hyp([6, 5], -2.0), hyp([6, 5], -1.2)], bindings, original, m)
    assert len(acc) == 1 and acc[0].score == -1.2
    assert stats == {"deduped": 1}


def test_filter_by_value():
    m, original, bindings = filter_setup()
    m2 = toy_model(n_out=3)  # o2 stands in for the literal value
    original = utt("o0 o2", [("City", 1, 2)])
    acc, stats = filter_candidates([hyp([6, 5], -1.0), hyp([5, 4], -1.5)], (("City", ("o2",)),), original, m2,
                                   FilterOptions(slot_tokens=False))
    assert [c.utterance.tokens for c in acc] == [("o2", "o1")]
    assert stats == {"missing-slot": 1}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.lists(st.integers(3, 6), max_size=4), st.floats(-5, 0), st.booleans()),
                max_size=8))
def test_accepted_outputs_keep_slot_types(raw):
    m, original, bindings = filter_setup()
    hyps = [hyp(ids, s, f) for ids, s, f in raw]
    acc, stats = filter_candidates(hyps, bindings, original, m)
    assert sum(stats.values()) + len(acc) == len(hyps)
    assert len({c.utterance.tokens for c in acc}) == len(acc)
    for c in acc:
        assert sorted(s.slot_type for s in c.utterance.slots) == ["City"]
        assert c.utterance.tokens != original.tokens
