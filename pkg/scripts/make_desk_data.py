"""Regenerate the committed synthetic data under data/.

Writes one grammar per travel skill (flights is the target skill; trains,
buses and ferries make up the in-domain mining corpus), an English to
pseudo-French parallel corpus for stage-1 training, a 50-pair toy corpus,
and a 16-dimensional embedding file covering every token.

    python scripts/make_desk_data.py [--out data]
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
from pathlib import Path

import numpy as np

from paraug.grammar import parse_grammar
from paraug.seq2seq import read_parallel
from paraug.textcore import EmbeddingTable, write_embeddings

CITIES = [
    "boston", "chicago", "denver", "seattle", "miami", "dallas", "atlanta",
    "new york", "san francisco", "los angeles", "paris", "london",
]
DATES = [
    "today", "tomorrow", "monday", "friday", "sunday", "next week",
    "this weekend", "march third", "june first",
]

# Every skill is a flight app built from the same pool of phrasing parts.
# The target skill uses each opener, action and core once per intent, so its
# held-out templates contain parts its training templates never show; the
# other skills use seeded random (opener, action, core) combinations and
# between them cover the whole pool.
OPENERS = {
    "BookFlight": ["", "i want to", "please", "alexa", "go ahead and", "i wish to",
                   "hurry and", "kindly", "i plan to", "try to"],
    "CheckFare": ["", "can you", "i would like to", "is it possible to", "hey",
                  "quickly", "tell me how to", "help me", "i wonder if you could", "just"],
    "FlightStatus": ["", "could you", "let me", "i need to", "would you", "now",
                     "i am trying to", "remind me to", "do not forget to", "somebody should"],
}
ACTIONS = {
    "BookFlight": ["book a flight", "reserve a seat", "get me a ticket", "buy plane tickets",
                   "arrange air travel", "purchase a fare", "grab a seat", "schedule a trip",
                   "make a booking", "secure passage"],
    "CheckFare": ["check the fare", "know the price", "see ticket prices", "compare fares",
                  "find the cheapest option", "look up airfare", "get a price quote",
                  "estimate the cost", "hear the going rate", "price a journey"],
    "FlightStatus": ["check my flight", "track my plane", "see the status", "find out if it's late",
                     "know when it lands", "follow my trip", "confirm my departure",
                     "monitor the arrival", "verify the gate", "watch the board"],
}
CORES = {
    "BookFlight": ["from {city} to {city}", "{date} into {city}", "leaving {city} {date}",
                   "heading toward {city}", "out of {city}", "for {city} departing {date}",
                   "landing in {city}", "over to {city} by {date}", "with a stop in {city}",
                   "returning {date} from {city}"],
    "CheckFare": ["between {city} and {city}", "for {city}", "via {city} on {date}",
                  "flying into {city}", "starting at {city} around {date}", "reaching {city}",
                  "with a {date} return to {city}", "that connects through {city}",
                  "past {city} before {date}", "off {city} during {date}"],
    "FlightStatus": ["bound for {city}", "arriving at {city}", "coming from {city} {date}",
                     "that departs {date}", "landing near {city}", "out of {city} this morning",
                     "scheduled at {city} after {date}", "touching down in {city}",
                     "which left {city} {date}", "en route to {city}"],
}
SKILLS = {
    # skill: (seed, templates per intent); the first one is the target skill
    "skyhop": (1, 10),
    "jetset": (2, 20),
    "airfares": (3, 20),
    "travelbuddy": (4, 20),
}
TARGET = "skyhop"


def skill_names() -> list[str]:
    return list(SKILLS)


def skill_templates(skill: str) -> dict[str, list[str]]:
    seed, n = SKILLS[skill]
    rng = np.random.default_rng(seed)
    out = {}
    for intent in ACTIONS:
        parts = (OPENERS[intent], ACTIONS[intent], CORES[intent])
        if skill == TARGET:
            perms = [rng.permutation(len(p))[:n] for p in parts]
            combos = [tuple(p[i] for p, i in zip(parts, idx)) for idx in zip(*perms)]
        else:
            pool = list(itertools.product(*parts))
            combos = [pool[i] for i in sorted(rng.choice(len(pool), size=n, replace=False))]
        out[intent] = [" ".join(w for w in c if w) for c in combos]
    return out


def grammar_text(skill: str) -> str:
    lines = [f"# synthetic flight booking skill {skill!r}", f"skill {skill}", "", "catalog city:"]
    lines += CITIES + ["", "catalog date:"] + DATES
    for intent, templates in skill_templates(skill).items():
        lines += ["", f"intent {intent}:"] + templates
    return "\n".join(lines) + "\n"


# word-for-word lexicon; unknown words pass through unchanged
LEXICON = {
    "i": "je", "want": "veux", "to": "a", "book": "reserver", "a": "un", "the": "le",
    "flight": "vol", "train": "train", "bus": "autobus", "ferry": "bac", "ticket": "billet",
    "from": "de", "on": "le", "for": "pour", "me": "moi", "please": "svp", "can": "peux",
    "you": "tu", "could": "pourrais", "need": "besoin", "would": "voudrais", "like": "aimer",
    "help": "aide", "check": "verifie", "price": "prix", "fare": "tarif", "fares": "tarifs",
    "how": "combien", "much": "cout", "is": "est", "what": "quel", "my": "mon",
    "status": "statut", "time": "heure", "late": "retard", "delayed": "retarde",
    "cheapest": "moins", "show": "montre", "tell": "dis", "when": "quand",
    "arrives": "arrive", "left": "parti", "today": "aujourdhui", "tomorrow": "demain",
    "monday": "lundi", "friday": "vendredi", "sunday": "dimanche", "next": "prochaine",
    "week": "semaine", "this": "ce", "weekend": "weekend", "seat": "place",
    "reserve": "retiens", "get": "obtiens", "know": "savoir", "find": "trouve",
    "out": "dehors", "if": "si", "of": "de", "track": "suivre", "arrival": "arrivee",
    "compare": "compare", "expensive": "cher", "prices": "prix", "go": "aller",
    "by": "par", "take": "prendre", "sail": "naviguer", "fly": "voler", "has": "a",
    "it": "il", "there": "la", "hotel": "hotel", "room": "chambre", "in": "dans",
    "cheap": "bon", "good": "bon", "new": "nouveau", "york": "york", "san": "san",
    "francisco": "francisco", "los": "los", "angeles": "angeles", "paris": "paris",
    "london": "londres", "boston": "boston", "chicago": "chicago", "denver": "denver",
    "seattle": "seattle", "miami": "miami", "dallas": "dallas", "atlanta": "atlanta",
    "march": "mars", "june": "juin", "third": "trois", "first": "premier", "let": "laisse",
    "see": "voir", "are": "sont", "there's": "ya", "any": "des", "trip": "voyage",
    "where": "ou", "weather": "meteo", "will": "va", "rain": "pleuvoir", "sunny": "soleil",
}
ADJ = {"cheapest", "next", "cheap", "good", "new"}

SUBJECTS = ["i want to", "i need to", "can you", "please", "could you", "help me",
            "i would like to", "let me"]
VERBS = ["book a {n}", "check the price of a {n}", "find a {n}", "track my {n}",
         "get a ticket", "see the cheapest {n}", "compare fares", "take a {n}"]
TAILS = ["from {a} to {b}", "to {b}", "to {b} on {d}", "for {d}", "from {a}", "to {b} {d}"]
PLAIN = ["is my {n} late", "how much is a {n} to {b}", "what is the fare to {b}",
         "when does the {n} arrive", "is the {n} from {a} delayed", "the weather in {b} {d}",
         "will it rain in {b} {d}", "a good hotel in {b}", "a room in {b} for {d}"]


def translate(tokens: list[str]) -> list[str]:
    out = [LEXICON.get(t, t) for t in tokens]
    # adjective after noun, a small reordering the model has to learn
    i = 0
    while i < len(tokens) - 1:
        if tokens[i] in ADJ:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            i += 1
    return out


def parallel_corpus(n: int, seed: int) -> list[tuple[str, str]]:
    rng = np.random.default_rng(seed)
    nouns = ["flight", "train", "bus", "ferry", "plane"]
    seen, pairs = set(), []
    while len(pairs) < n:
        fill = dict(
            n=nouns[rng.integers(len(nouns))],
            a=CITIES[rng.integers(len(CITIES))],
            b=CITIES[rng.integers(len(CITIES))],
            d=DATES[rng.integers(len(DATES))],
        )
        if rng.random() < 0.25:
            src = PLAIN[rng.integers(len(PLAIN))].format(**fill)
        else:
            parts = [SUBJECTS[rng.integers(len(SUBJECTS))], VERBS[rng.integers(len(VERBS))],
                     TAILS[rng.integers(len(TAILS))]]
            src = " ".join(parts).format(**fill)
        if src in seen:
            continue
        seen.add(src)
        pairs.append((src, " ".join(translate(src.split()))))
    return pairs


def toy_corpus(n: int) -> list[tuple[str, str]]:
    # short, low-entropy pairs for the stage-1 convergence check
    pairs = []
    for s in SUBJECTS:
        for v in ["book a flight", "book a train", "check the fare", "track my bus",
                  "find a ferry", "get a ticket", "see the cheapest flight"]:
            src = f"{s} {v}"
            pairs.append((src, " ".join(translate(src.split()))))
    return pairs[:n]


def embedding_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(seed).normal(0.0, 0.5, dim).round(6)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--pairs", type=int, default=300)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    vocab: set[str] = set()
    for skill in SKILLS:
        path = out / f"{skill}.grammar"
        path.write_text(grammar_text(skill), encoding="utf-8")
        g = parse_grammar(path)
        for values in g.catalogs.values():
            vocab.update(t for v in values for t in v)
        for _, t in g.templates():
            vocab.update(e for e in t.elements if isinstance(e, str))

    for name, pairs in [("parallel.tsv", parallel_corpus(args.pairs, args.seed)),
                        ("toy_parallel.tsv", toy_corpus(50))]:
        (out / name).write_text("".join(f"{s}\t{t}\n" for s, t in pairs), encoding="utf-8")
        vocab.update(t for s, _ in read_parallel(out / name) for t in s)

    table = EmbeddingTable({t: embedding_vector(t, args.dim) for t in sorted(vocab)}, args.dim)
    write_embeddings(table, out / "embeddings.txt")
    print(f"{len(SKILLS)} grammars, {args.pairs} parallel pairs, {len(vocab)} embedded tokens -> {out}")


if __name__ == "__main__":
    main()
