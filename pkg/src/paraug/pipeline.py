"""End-to-end experiment steps; each function backs one CLI subcommand."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, metrics
from .config import ConfigError, PipelineConfig, derive_seed
from .decode import FilterOptions, beam_search, filter_candidates, sample_hypotheses
from .grammar import (
    AnnotatedUtterance,
    parse_grammar,
    read_utterances,
    sample_utterances,
    split_templates,
    write_utterances,
)
from .mining import emit_pairs, group_paraphrases, read_pairs, write_pairs
from .nlu import crf, maxent
from .seq2seq import (
    ENCODER_BLOCKS,
    TrainConfig,
    encode_pairs,
    extend_output_vocab,
    init_model,
    load_checkpoint,
    read_header,
    read_parallel,
    reinit_decoder,
    save_checkpoint,
    train_shared_encoder,
)
from .slotcopy import (
    NoSlotsError,
    abstract_input,
    abstract_pair,
    build_surrogates,
    load_surrogates,
    parse_slot_token,
    save_surrogates,
)
from .textcore import build_vocab, load_embeddings, load_stop_words

log = logging.getLogger(__name__)

ADAPT_SCHEMES = ("no_slot_copy", "fixed_encoder", "fine_tune")
MODEL_NAMES = {
    "baseline": "baseline",
    "no_slot_copy": "no slot copying",
    "fixed_encoder": "fixed encoder",
    "fine_tune": "fine-tuned encoder",
}


class EmptyResult(RuntimeError):
    """A step ran but produced nothing usable (CLI exit code 2)."""


# ---------------------------------------------------------------- helpers

def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: PipelineConfig, name: str, inputs: Sequence, outputs: Sequence) -> None:
    """Provenance record: config snapshot, input/output hashes, versions."""
    mdir = cfg.workdir / "manifests"
    mdir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": name,
        "config": cfg.to_dict(),
        "inputs": {str(p): _file_hash(p) for p in inputs},
        "outputs": {str(p): _file_hash(p) for p in outputs},
        "versions": {"paraug": __version__, "numpy": np.__version__},
    }
    _atomic_write_text(mdir / f"{name}.json", json.dumps(record, indent=1, sort_keys=True) + "\n")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic(path: Path, writer, *args) -> None:
    tmp = Path(str(path) + ".tmp")
    writer(*args, tmp)
    os.replace(tmp, path)


def _write_loss_csv(history: Sequence[float], path: Path) -> None:
    lines = ["epoch,loss"] + [f"{i + 1},{v!r}" for i, v in enumerate(history)]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _stop_words(cfg: PipelineConfig):
    return load_stop_words(cfg.paths.stop_words)


# ---------------------------------------------------------------- sample

def cmd_sample(cfg: PipelineConfig) -> dict:
    """Sample the skill grammar into train/live sets plus the mining corpus."""
    cfg.check_paths("grammar", "indomain_grammars")
    grammar = parse_grammar(cfg.paths.grammar)
    others = [parse_grammar(p) for p in cfg.paths.indomain_grammars]
    train_g, live_g = split_templates(
        grammar, cfg.data.train_fraction, derive_seed(cfg.seed, "split")
    )
    if not live_g.intents:
        raise ConfigError("template split left nothing for the held-out set")
    train = sample_utterances(train_g, cfg.data.per_template, derive_seed(cfg.seed, "sample-train"))
    live = sample_utterances(live_g, cfg.data.per_template, derive_seed(cfg.seed, "sample-live"))
    indomain: list[AnnotatedUtterance] = []
    for g in others:
        indomain += sample_utterances(
            g, cfg.data.indomain_per_template, derive_seed(cfg.seed, f"sample-{g.skill_id}")
        )
    indomain += train

    wd = cfg.workdir
    wd.mkdir(parents=True, exist_ok=True)
    outputs = [wd / "train.jsonl", wd / "live.jsonl", wd / "indomain.jsonl"]
    for data, path in zip((train, live, indomain), outputs):
        _atomic(path, write_utterances, data)
    write_manifest(cfg, "sample", [cfg.paths.grammar, *cfg.paths.indomain_grammars], outputs)
    return {
        "train_templates": len(train_g.templates()),
        "live_templates": len(live_g.templates()),
        "train": len(train),
        "live": len(live),
        "indomain": len(indomain),
    }


# ---------------------------------------------------------------- mine

def cmd_mine(cfg: PipelineConfig, input_path: str | Path | None = None) -> dict:
    wd = cfg.workdir
    src = Path(input_path) if input_path else wd / "indomain.jsonl"
    data = read_utterances(_require(src, "utterance file"))
    groups = group_paraphrases(data)
    pairs = emit_pairs(groups)
    if not pairs:
        raise EmptyResult(
            f"no paraphrase pairs in {src}: {len(data)} utterances, "
            f"{sum(1 for u in data if u.slots)} with slots, no group of size >= 2"
        )
    surrogates = build_surrogates([u for u in data if u.slots], _stop_words(cfg))
    wd.mkdir(parents=True, exist_ok=True)
    _atomic(wd / "pairs.jsonl", write_pairs, pairs)
    _atomic(wd / "surrogates.json", save_surrogates, surrogates)
    write_manifest(cfg, "mine", [src], [wd / "pairs.jsonl", wd / "surrogates.json"])
    return {"utterances": len(data), "groups": len(groups), "pairs": len(pairs)}


# ---------------------------------------------------------------- pretrain

def cmd_pretrain(cfg: PipelineConfig) -> dict:
    """Stage 1: shared encoder, one decoder per parallel corpus."""
    if not cfg.paths.parallel:
        raise ConfigError("pretraining needs at least one parallel corpus")
    cfg.check_paths("parallel", "embeddings")
    table = load_embeddings(cfg.paths.embeddings, cfg.dims.embedding_dim)
    corpora_tokens = [read_parallel(p) for p in cfg.paths.parallel]
    for p, c in zip(cfg.paths.parallel, corpora_tokens):
        if not c:
            raise ConfigError(f"parallel corpus {p} is empty")
    in_vocab = table.vocabulary()
    emb = table.matrix(in_vocab)
    tc = replace(cfg.pretrain, scheme="mt_pretrain", seed=derive_seed(cfg.seed, "pretrain"))

    models, corpora = [], []
    for k, pairs in enumerate(corpora_tokens):
        out_vocab = build_vocab([t for _, t in pairs])
        m = init_model(in_vocab, out_vocab, emb, cfg.dims.hidden_dim, derive_seed(cfg.seed, f"init-{k}"))
        if models:
            for n in ENCODER_BLOCKS:
                m.params[n] = models[0].params[n]
        models.append(m)
        corpora.append(encode_pairs(pairs, in_vocab, out_vocab))

    trained, history = train_shared_encoder(models, corpora, tc)
    wd = cfg.workdir
    wd.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k, m in enumerate(trained):
        path = wd / ("stage1.ckpt" if k == 0 else f"stage1_dec{k}.ckpt")
        save_checkpoint(m, path, extra={"train_config": tc.to_dict(), "corpus": str(cfg.paths.parallel[k])})
        outputs.append(path)
    _write_loss_csv(history, wd / "stage1_loss.csv")
    outputs.append(wd / "stage1_loss.csv")
    write_manifest(cfg, "pretrain", [*cfg.paths.parallel, cfg.paths.embeddings], outputs)
    return {
        "pairs": sum(len(c) for c in corpora),
        "parameters": trained[0].n_parameters(),
        "final_loss": history[-1],
        "epochs": len(history),
    }


# ---------------------------------------------------------------- adapt

def adaptation_pairs(pairs, surrogates, scheme: str):
    """Token-level training pairs and slot tokens for a stage-2 scheme."""
    if scheme == "no_slot_copy":
        return [(list(p.source.tokens), list(p.target.tokens)) for p in pairs], []
    out, slot_toks = [], set()
    for p in pairs:
        ap = abstract_pair(p, surrogates)
        out.append((list(ap.source_tokens), list(ap.target_tokens)))
        slot_toks.update(t for t in ap.target_tokens if parse_slot_token(t))
    return out, sorted(slot_toks)


def cmd_adapt(cfg: PipelineConfig, scheme: str) -> dict:
    if scheme not in ADAPT_SCHEMES:
        raise ConfigError(f"unknown adaptation scheme {scheme!r}")
    wd = cfg.workdir
    ckpt = _require(wd / "stage1.ckpt", "stage-1 checkpoint")
    header = read_header(ckpt)
    if header["scheme"] != "mt_pretrain":
        raise ConfigError(f"{ckpt} was trained with scheme {header['scheme']!r}, expected mt_pretrain")
    pairs = read_pairs(_require(wd / "pairs.jsonl", "pairs file"))
    surrogates = load_surrogates(_require(wd / "surrogates.json", "surrogate map"))
    if not pairs:
        raise ConfigError("pairs file is empty")
    model = load_checkpoint(ckpt)

    tok_pairs, slot_toks = adaptation_pairs(pairs, surrogates, scheme)
    max_len = cfg.adapt.max_sequence_length
    kept = [(s, t) for s, t in tok_pairs if 1 <= len(s) <= max_len and len(t) <= max_len]
    if len(kept) < len(tok_pairs):
        log.info("dropped %d pairs longer than %d tokens", len(tok_pairs) - len(kept), max_len)

    counts = Counter(t for _, tgt in kept for t in tgt)
    new = sorted((t for t in counts if t not in model.output_vocab), key=lambda t: (-counts[t], t))
    vocab = model.output_vocab.extended([t for t in new if t not in slot_toks], slot_toks)
    model = extend_output_vocab(model, vocab, derive_seed(cfg.seed, f"extend-{scheme}"))
    if cfg.reinit_decoder:
        model = reinit_decoder(model, derive_seed(cfg.seed, f"reinit-{scheme}"))

    tc = replace(cfg.adapt, scheme=scheme, seed=derive_seed(cfg.seed, f"adapt-{scheme}"))
    corpus = encode_pairs(kept, model.input_vocab, model.output_vocab)
    (trained,), history = train_shared_encoder([model], [corpus], tc)

    out = wd / f"stage2_{scheme}.ckpt"
    save_checkpoint(trained, out, extra={"train_config": tc.to_dict()})
    _write_loss_csv(history, wd / f"stage2_{scheme}_loss.csv")
    write_manifest(cfg, f"adapt_{scheme}", [ckpt, wd / "pairs.jsonl", wd / "surrogates.json"],
                   [out, wd / f"stage2_{scheme}_loss.csv"])
    return {
        "scheme": scheme,
        "pairs": len(kept),
        "output_vocab": len(trained.output_vocab),
        "slot_tokens": len(slot_toks),
        "final_loss": history[-1],
    }


# ---------------------------------------------------------------- generate

def generate(model, inputs, surrogates, scheme, decode_cfg, seed: int = 0):
    """Paraphrase every input; returns (records, accepted utterances, stats)."""
    copy_slots = scheme != "no_slot_copy"
    options = FilterOptions(drop_identity=decode_cfg.drop_identity, slot_tokens=copy_slots)
    rng = np.random.default_rng(seed)
    stats: Counter = Counter()
    seen = {u.tokens for u in inputs}
    records, accepted = [], []
    for idx, u in enumerate(inputs):
        try:
            src_tokens, bindings = abstract_input(u, surrogates)
        except NoSlotsError:
            stats["inputs_without_slots"] += 1
            continue
        if not copy_slots:
            src_tokens = u.tokens
        ids = model.input_vocab.encode(src_tokens)
        if decode_cfg.sampling:
            hyps = sample_hypotheses(model, ids, decode_cfg.nbest, decode_cfg.max_len, rng)
        else:
            hyps = beam_search(model, ids, decode_cfg.beam, decode_cfg.nbest, decode_cfg.max_len,
                               decode_cfg.length_normalize)
        stats["inputs"] += 1
        stats["hypotheses"] += len(hyps)
        cands, reasons = filter_candidates(hyps, bindings, u, model, options)
        stats.update({f"rejected:{k}" if k != "deduped" else k: v for k, v in reasons.items()})
        n_acc = 0
        for c in cands:
            if c.utterance.tokens in seen:
                stats["deduped"] += 1
                continue
            seen.add(c.utterance.tokens)
            accepted.append(c.utterance)
            n_acc += 1
            records.append({
                "input_index": idx,
                "source": list(u.tokens),
                "output": list(c.utterance.tokens),
                "score": c.score,
                "scheme": scheme,
                "utterance": c.utterance.to_dict(),
            })
        stats["accepted"] += n_acc
        if n_acc == 0:
            log.info("all candidates rejected for input %d: %s", idx, u.text())
    return records, accepted, stats


def cmd_generate(
    cfg: PipelineConfig,
    scheme: str,
    checkpoint: str | Path | None = None,
    input_path: str | Path | None = None,
) -> dict:
    wd = cfg.workdir
    ckpt = _require(Path(checkpoint) if checkpoint else wd / f"stage2_{scheme}.ckpt", "checkpoint")
    header = read_header(ckpt)
    if header["scheme"] != scheme:
        raise ConfigError(f"{ckpt} was trained with scheme {header['scheme']!r}, not {scheme!r}")
    src = _require(Path(input_path) if input_path else wd / "train.jsonl", "input utterances")
    sur_path = _require(wd / "surrogates.json", "surrogate map")
    inputs = read_utterances(src)
    surrogates = load_surrogates(sur_path)
    model = load_checkpoint(ckpt)

    records, accepted, stats = generate(
        model, inputs, surrogates, scheme, cfg.decode, derive_seed(cfg.seed, f"sample-{scheme}")
    )
    gen_path = wd / f"generated_{scheme}.jsonl"
    aug_path = wd / f"augmented_{scheme}.jsonl"
    lines = [json.dumps(r, sort_keys=True) for r in records]
    lines.append(json.dumps({"summary": dict(sorted(stats.items())), "scheme": scheme}, sort_keys=True))
    _atomic_write_text(gen_path, "\n".join(lines) + "\n")
    _atomic(aug_path, write_utterances, list(inputs) + accepted)
    write_manifest(cfg, f"generate_{scheme}", [ckpt, src, sur_path], [gen_path, aug_path])
    return {"scheme": scheme, "inputs": len(inputs), "generated": len(accepted), **dict(stats)}


# ---------------------------------------------------------------- NLU training and evaluation

def train_nlu(data: Sequence[AnnotatedUtterance], nlu_cfg, seed: int):
    ic = maxent.train_ic([(u.tokens, u.intent) for u in data], nlu_cfg.l2, nlu_cfg.epochs,
                         nlu_cfg.lr, seed)
    ner = crf.train_ner([(u.tokens, crf.to_bio(u)) for u in data], nlu_cfg.l2, nlu_cfg.epochs,
                        nlu_cfg.lr, seed)
    return ic, ner


def cmd_train_nlu(cfg: PipelineConfig, data_path: str | Path, out_prefix: str | Path | None = None) -> dict:
    data = read_utterances(_require(Path(data_path), "dataset"))
    if not data:
        raise ConfigError(f"{data_path} is empty")
    ic, ner = train_nlu(data, cfg.nlu, derive_seed(cfg.seed, "nlu"))
    prefix = Path(out_prefix) if out_prefix else cfg.workdir / Path(data_path).stem
    prefix.parent.mkdir(parents=True, exist_ok=True)
    ic_path, ner_path = Path(f"{prefix}.ic.json"), Path(f"{prefix}.ner.json")
    _atomic(ic_path, lambda p: ic.save(p))
    _atomic(ner_path, lambda p: ner.save(p))
    return {"ic_model": str(ic_path), "ner_model": str(ner_path), "examples": len(data)}


def predict(ic, ner, test: Sequence[AnnotatedUtterance]) -> list[metrics.Prediction]:
    preds = []
    for u in test:
        intent, _ = maxent.classify(ic, u.tokens)
        _, spans = crf.tag(ner, u.tokens)
        preds.append(metrics.Prediction(
            u.intent,
            tuple((s.slot_type, s.value) for s in u.slots),
            intent,
            tuple((s.slot_type, s.value) for s in spans),
        ))
    return preds


def _safe(fn, *args):
    try:
        return fn(*args)
    except ZeroDivisionError:
        return None


def evaluate(
    baseline: Sequence[AnnotatedUtterance],
    augmented: dict[str, Sequence[AnnotatedUtterance]],
    test: Sequence[AnnotatedUtterance],
    nlu_cfg,
    seed: int,
) -> dict:
    if not test:
        raise ConfigError("test set is empty")
    test_words = [t for u in test for t in u.tokens]
    rows = []
    for name, data in [("baseline", baseline), *augmented.items()]:
        ic, ner = train_nlu(data, nlu_cfg, seed)
        preds = predict(ic, ner, test)
        rows.append({
            "model": MODEL_NAMES.get(name, name),
            "key": name,
            "bigram_coverage": metrics.bigram_coverage(data, test),
            "word_coverage": metrics.word_coverage([t for u in data for t in u.tokens], test_words),
            "input_size": len(baseline),
            "output_size": len(data) - len(baseline),
            "icer": metrics.icer(preds),
            "ser": _safe(metrics.ser, preds),
            "semer": _safe(metrics.semer, preds),
        })
    base = rows[0]
    for r in rows:
        for m in ("icer", "ser", "semer"):
            ok = base[m] is not None and r[m] is not None
            r[f"rel_{m}"] = metrics.relative_change(base[m], r[m]) if ok else None
    return {
        "test_size": len(test),
        "skill_diversity": metrics.unique_patterns(test),
        "rows": rows,
    }


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:+.1f}%"


def render_report(report: dict) -> str:
    """Plain-text table in the layout of a baseline-vs-augmented comparison."""
    head = ["Model", "Bigram coverage", "Input/output size", "ICER", "SER", "SEMER"]
    body = [
        [r["model"], f"{r['bigram_coverage']:.3f}", f"{r['input_size']}/{r['output_size']}",
         _pct(r["rel_icer"]), _pct(r["rel_ser"]), _pct(r["rel_semer"])]
        for r in report["rows"]
    ]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]

    def fmt(row):
        return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()

    lines = [
        f"skill: {report.get('skill', '?')}  test utterances: {report['test_size']}  "
        f"unique test patterns: {report['skill_diversity']}",
        "Relative error change over baseline in the ICER/SER/SEMER columns.",
        "",
        fmt(head),
        fmt(["-" * w for w in widths]),
    ]
    lines += [fmt(r) for r in body]
    lines += ["", "Absolute values:"]
    abs_head = ["Model", "Word coverage", "ICER", "SER", "SEMER"]

    def num(v):
        return "n/a" if v is None else f"{v:.4f}"

    abs_body = [[r["model"], f"{r['word_coverage']:.3f}", num(r["icer"]), num(r["ser"]), num(r["semer"])]
                for r in report["rows"]]
    widths = [max(len(row[i]) for row in [abs_head] + abs_body) for i in range(len(abs_head))]
    lines += [fmt(abs_head), fmt(["-" * w for w in widths])] + [fmt(r) for r in abs_body]
    return "\n".join(lines) + "\n"


def cmd_eval(
    cfg: PipelineConfig,
    baseline_path: str | Path | None = None,
    augmented_paths: dict[str, str] | None = None,
    test_path: str | Path | None = None,
) -> dict:
    wd = cfg.workdir
    base_p = _require(Path(baseline_path) if baseline_path else wd / "train.jsonl", "baseline dataset")
    test_p = _require(Path(test_path) if test_path else wd / "live.jsonl", "test set")
    if augmented_paths is None:
        augmented_paths = {
            s: str(wd / f"augmented_{s}.jsonl") for s in ADAPT_SCHEMES
            if (wd / f"augmented_{s}.jsonl").exists()
        }
    for p in augmented_paths.values():
        _require(Path(p), "augmented dataset")
    baseline = read_utterances(base_p)
    test = read_utterances(test_p)
    if not test:
        raise ConfigError(f"test set {test_p} is empty")
    augmented = {k: read_utterances(p) for k, p in augmented_paths.items()}
    for k, data in augmented.items():
        if data[: len(baseline)] != baseline:
            raise ConfigError(f"augmented dataset {k!r} does not start with the baseline utterances")

    report = evaluate(baseline, augmented, test, cfg.nlu, derive_seed(cfg.seed, "nlu"))
    report["skill"] = baseline[0].skill_id if baseline else "?"
    wd.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(wd / "report.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    _atomic_write_text(wd / "report.txt", render_report(report))
    write_manifest(cfg, "eval", [base_p, test_p, *augmented_paths.values()],
                   [wd / "report.json", wd / "report.txt"])
    return report


def cmd_report(cfg: PipelineConfig, report_path: str | Path | None = None) -> str:
    path = _require(Path(report_path) if report_path else cfg.workdir / "report.json", "report")
    with open(path, encoding="utf-8") as f:
        return render_report(json.load(f))
