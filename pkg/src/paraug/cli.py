"""Command line entry point: ``paraug <subcommand> --config cfg.json``.

Exit codes: 0 success, 1 fatal error, 2 the step produced an empty result.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace

from . import pipeline
from .config import ConfigError, load_config
from .grammar import GrammarError
from .nlu.crf import BioError
from .seq2seq import CheckpointError, TrainingError
from .slotcopy import SlotRejection
from .textcore import EmbeddingFormatError

log = logging.getLogger("paraug")

FATAL = (ConfigError, GrammarError, CheckpointError, TrainingError, EmbeddingFormatError,
         BioError, SlotRejection, OSError, ValueError)


def _apply_overrides(cfg, args):
    if getattr(args, "workdir", None):
        cfg.paths.workdir = args.workdir
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    dec = cfg.decode
    if getattr(args, "beam", None) is not None:
        dec = replace(dec, beam=args.beam)
    if getattr(args, "nbest", None) is not None:
        dec = replace(dec, nbest=args.nbest)
    if getattr(args, "max_len", None) is not None:
        dec = replace(dec, max_len=args.max_len)
    if dec.beam < 1 or dec.nbest < 1 or dec.max_len < 1:
        raise ConfigError("--beam, --nbest and --max-len must be >= 1")
    if dec.nbest > dec.beam:
        raise ConfigError("--nbest cannot exceed --beam")
    cfg.decode = dec
    if getattr(args, "reinit_decoder", False):
        cfg.reinit_decoder = True
    return cfg


def _print(obj) -> None:
    if isinstance(obj, str):
        sys.stdout.write(obj)
    else:
        print(json.dumps(obj, indent=1, sort_keys=True))


def _run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cmd = args.command
    if cmd == "sample":
        _print(pipeline.cmd_sample(cfg))
    elif cmd == "mine":
        _print(pipeline.cmd_mine(cfg, args.input))
    elif cmd == "pretrain":
        _print(pipeline.cmd_pretrain(cfg))
    elif cmd == "adapt":
        _print(pipeline.cmd_adapt(cfg, args.scheme))
    elif cmd == "generate":
        _print(pipeline.cmd_generate(cfg, args.scheme, args.checkpoint, args.input))
    elif cmd == "train-nlu":
        _print(pipeline.cmd_train_nlu(cfg, args.data, args.out))
    elif cmd == "eval":
        aug = None
        if args.augmented:
            aug = {}
            for item in args.augmented:
                name, sep, path = item.partition("=")
                if not sep:
                    raise ConfigError(f"--augmented expects NAME=PATH, got {item!r}")
                aug[name] = path
        report = pipeline.cmd_eval(cfg, args.baseline, aug, args.test)
        _print(pipeline.render_report(report))
    elif cmd == "report":
        _print(pipeline.cmd_report(cfg, args.report))
    elif cmd == "run":
        for name, fn in [
            ("sample", lambda: pipeline.cmd_sample(cfg)),
            ("mine", lambda: pipeline.cmd_mine(cfg)),
            ("pretrain", lambda: pipeline.cmd_pretrain(cfg)),
        ]:
            t0 = time.perf_counter()
            log.info("%s: %s (%.1fs)", name, fn(), time.perf_counter() - t0)
        for scheme in args.schemes:
            t0 = time.perf_counter()
            log.info("adapt: %s", pipeline.cmd_adapt(cfg, scheme))
            log.info("generate: %s (%.1fs)", pipeline.cmd_generate(cfg, scheme),
                     time.perf_counter() - t0)
        report = pipeline.cmd_eval(cfg)
        _print(pipeline.render_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--workdir", help="override paths.workdir")
    common.add_argument("--seed", type=int, help="override the top-level seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="paraug", description="Slot-preserving paraphrase augmentation.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("sample", parents=[common], help="sample train/held-out/in-domain utterances")
    s = sub.add_parser("mine", parents=[common], help="mine paraphrase pairs")
    s.add_argument("--input", help="annotated utterances (JSONL); default workdir/indomain.jsonl")
    sub.add_parser("pretrain", parents=[common], help="stage-1 training on parallel corpora")

    s = sub.add_parser("adapt", parents=[common], help="stage-2 training on paraphrase pairs")
    s.add_argument("--scheme", required=True, choices=pipeline.ADAPT_SCHEMES)
    s.add_argument("--reinit-decoder", action="store_true")

    s = sub.add_parser("generate", parents=[common], help="paraphrase utterances into an augmented set")
    s.add_argument("--scheme", required=True, choices=pipeline.ADAPT_SCHEMES)
    s.add_argument("--checkpoint", help="default workdir/stage2_<scheme>.ckpt")
    s.add_argument("--input", help="default workdir/train.jsonl")
    s.add_argument("--beam", type=int)
    s.add_argument("--nbest", type=int)
    s.add_argument("--max-len", type=int)

    s = sub.add_parser("train-nlu", parents=[common], help="train the intent classifier and slot tagger")
    s.add_argument("--data", required=True)
    s.add_argument("--out", help="output prefix")

    s = sub.add_parser("eval", parents=[common], help="train NLU per dataset and score the held-out set")
    s.add_argument("--baseline", help="default workdir/train.jsonl")
    s.add_argument("--test", help="default workdir/live.jsonl")
    s.add_argument("--augmented", nargs="*", metavar="NAME=PATH")

    s = sub.add_parser("report", parents=[common], help="render a saved report as text")
    s.add_argument("--report", help="default workdir/report.json")

    s = sub.add_parser("run", parents=[common], help="every step end to end")
    s.add_argument("--schemes", nargs="+", default=list(pipeline.ADAPT_SCHEMES),
                   choices=pipeline.ADAPT_SCHEMES)
    s.add_argument("--beam", type=int)
    s.add_argument("--nbest", type=int)
    s.add_argument("--max-len", type=int)
    s.add_argument("--reinit-decoder", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except pipeline.EmptyResult as exc:
        log.error("empty result: %s", exc)
        return 2
    except FATAL as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
