from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import utt
from paraug.mining import ParaphrasePair
from paraug.slotcopy import (
    NoSlotsError,
    SlotRejection,
    abstract_input,
    abstract_pair,
    abstract_target,
    build_surrogates,
    load_surrogates,
    parse_slot_token,
    restore_by_value,
    restore_slots,
    save_surrogates,
    slot_token,
)
from paraug.textcore import STOP_WORDS


def city_data(counts):
    out = []
    for value, n in counts.items():
        toks = value.split()
        out += [utt("to " + value, [("City", 1, 1 + len(toks))])] * n
    return out


def test_surrogate_examples():
    assert build_surrogates(city_data({"seattle": 3, "new york": 5}), STOP_WORDS) == {"City": ("new", "york")}
    assert build_surrogates(city_data({"a": 7, "boston": 2}), STOP_WORDS) == {"City": ("boston",)}
    assert build_surrogates(city_data({"boston": 2, "austin": 2}), STOP_WORDS) == {"City": ("austin",)}
    assert build_surrogates(city_data({"a": 2, "the": 1}), STOP_WORDS) == {"City": ("a",)}


def test_surrogate_io(tmp_path):
    s = {"City": ("new", "york"), "Date": ("today",)}
    save_surrogates(s, tmp_path / "s.json")
    assert load_surrogates(tmp_path / "s.json") == s


SUR = {"City": ("new", "york")}


def test_abstract_pair_weather():
    src = utt("weather in seattle", [("City", 2, 3)])
    tgt = utt("what is the forecast for seattle", [("City", 5, 6)])
    ap = abstract_pair(ParaphrasePair(src, tgt), SUR)
    assert ap.source_tokens == ("weather", "in", "new", "york")
    assert ap.target_tokens == ("what", "is", "the", "forecast", "for", "<City_1>")
    assert ap.bindings == (("City", ("seattle",)),)


def test_abstract_pair_two_cities_matched_by_value():
    src = utt("from boston to seattle", [("City", 1, 2), ("City", 3, 4)])
    tgt = utt("flights to seattle from boston", [("City", 2, 3), ("City", 4, 5)])
    ap = abstract_pair(ParaphrasePair(src, tgt), SUR)
    assert ap.target_tokens == ("flights", "to", "<City_2>", "from", "<City_1>")
    out, _ = restore_slots(ap.target_tokens, ap.bindings)
    assert out == tgt.tokens


def test_abstract_pair_order_fallback():
    src = utt("from boston to seattle", [("City", 1, 2), ("City", 3, 4)])
    tgt = utt("flights to paris from rome", [("City", 2, 3), ("City", 4, 5)])
    ap = abstract_pair(ParaphrasePair(src, tgt), SUR)
    assert ap.target_tokens == ("flights", "to", "<City_1>", "from", "<City_2>")


def test_abstract_input_examples():
    u = utt("weather in seattle", [("City", 2, 3)])
    assert abstract_input(u, SUR) == (("weather", "in", "new", "york"), (("City", ("seattle",)),))
    same = utt("weather in new york", [("City", 2, 4)])
    tokens, bindings = abstract_input(same, SUR)
    assert tokens == same.tokens and bindings == (("City", ("new", "york")),)
    with pytest.raises(NoSlotsError):
        abstract_input(utt("play something"), SUR)


def test_restore_examples():
    b = (("City", ("seattle",)),)
    out, spans = restore_slots("what is the forecast for <City_1>".split(), b)
    assert out == tuple("what is the forecast for seattle".split())
    assert spans[0].start == 5 and spans[0].value == ("seattle",)
    with pytest.raises(SlotRejection) as r:
        restore_slots("what is the forecast".split(), b)
    assert r.value.reason == "missing-slot"
    b2 = (("City", ("boston",)), ("City", ("seattle",)))
    out, _ = restore_slots("flights to <City_2> from <City_1>".split(), b2)
    assert out == tuple("flights to seattle from boston".split())


@pytest.mark.parametrize(
    "text, reason",
    [
        ("to <City_1> <City_1>", "duplicate-index"),
        ("to <City_1> <City_2>", "extra-slot"),
        ("to <City_1> <Date_1>", "wrong-type"),
        ("to nowhere", "missing-slot"),
    ],
)
def test_restore_reasons(text, reason):
    with pytest.raises(SlotRejection) as r:
        restore_slots(text.split(), (("City", ("paris",)),))
    assert r.value.reason == reason


def test_restore_by_value():
    b = (("City", ("new", "york")), ("Date", ("today",)))
    out, spans = restore_by_value("today fly to new york".split(), b)
    assert [(s.slot_type, s.start, s.end) for s in spans] == [("Date", 0, 1), ("City", 3, 5)]
    with pytest.raises(SlotRejection):
        restore_by_value("fly to new york".split(), b)
    with pytest.raises(SlotRejection):
        restore_by_value("today today new york".split(), b)


def test_slot_token_format():
    assert slot_token("City", 2) == "<City_2>"
    assert parse_slot_token("<City_2>") == ("City", 2)
    assert parse_slot_token("<unk>") is None
    assert parse_slot_token("city") is None


WORDS = ["go", "to", "from", "new", "york", "paris", "on", "friday"]


@st.composite
def annotated(draw):
    parts, slots = [], []
    for _ in range(draw(st.integers(1, 5))):
        if draw(st.booleans()):
            t = draw(st.sampled_from(["City", "Date"]))
            value = draw(st.lists(st.sampled_from(WORDS), min_size=1, max_size=2))
            slots.append((t, len(parts), len(parts) + len(value)))
            parts += value
        else:
            parts.append(draw(st.sampled_from(WORDS)))
    if not slots:
        slots.append(("City", len(parts), len(parts) + 1))
        parts.append("rome")
    return utt(" ".join(parts), slots)


@settings(max_examples=300, deadline=None)
@given(annotated())
def test_round_trip_identity_output(u):
    sur = {"City": ("paris",), "Date": ("friday",)}
    source, bindings = abstract_input(u, sur)
    out, spans = restore_slots(abstract_target(u), bindings)
    assert out == u.tokens and spans == u.slots
    # non-slot tokens untouched by abstraction
    assert len(source) - sum(len(sur[s.slot_type]) for s in u.slots) == len(u.tokens) - sum(
        s.end - s.start for s in u.slots
    )


SLOT_TOKENS = ["<City_1>", "<City_2>", "<City_3>", "<Date_1>", "<Date_2>", "<Time_1>"]


@settings(max_examples=500, deadline=None)
@given(annotated(), st.lists(st.sampled_from(WORDS + SLOT_TOKENS), max_size=8))
def test_restore_never_admits_violators(u, generated):
    _, bindings = abstract_input(u, {"City": ("paris",), "Date": ("friday",)})
    expected = Counter(slot_token(t, k) for t, k in _indexed(bindings))
    produced = Counter(t for t in generated if parse_slot_token(t))
    try:
        out, spans = restore_slots(generated, bindings)
    except SlotRejection:
        assert produced != expected or not generated
        return
    assert produced == expected
    assert Counter(s.slot_type for s in spans) == Counter(s.slot_type for s in u.slots)
    for s in spans:
        assert out[s.start : s.end] == s.value


def _indexed(bindings):
    seen = Counter()
    for t, _ in bindings:
        seen[t] += 1
        yield t, seen[t]
