"""Run the committed desk experiment end to end and print the report.

    python3 scripts/run_desk_experiment.py [--config data/desk_config.json] [--workdir DIR] [--seed N]

Regenerate the committed data first with scripts/make_desk_data.py if it
is missing.  Each step's result is logged with its wall-clock time.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

from paraug import pipeline
from paraug.config import load_config

REPO = Path(__file__).resolve().parents[1]
log = logging.getLogger("desk")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(REPO / "data" / "desk_config.json"))
    ap.add_argument("--workdir")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--schemes", nargs="+", default=list(pipeline.ADAPT_SCHEMES),
                    choices=pipeline.ADAPT_SCHEMES)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    if args.workdir:
        cfg.paths.workdir = args.workdir
    if args.seed is not None:
        cfg.seed = args.seed

    t_start = time.perf_counter()
    steps = [
        ("sample", lambda: pipeline.cmd_sample(cfg)),
        ("mine", lambda: pipeline.cmd_mine(cfg)),
        ("pretrain", lambda: pipeline.cmd_pretrain(cfg)),
    ]
    for scheme in args.schemes:
        steps.append((f"adapt {scheme}", lambda s=scheme: pipeline.cmd_adapt(cfg, s)))
        steps.append((f"generate {scheme}", lambda s=scheme: pipeline.cmd_generate(cfg, s)))
    steps.append(("eval", lambda: pipeline.cmd_eval(cfg)))

    report = None
    for name, fn in steps:
        t0 = time.perf_counter()
        result = fn()
        took = time.perf_counter() - t0
        if name == "eval":
            report = result
            log.info("%-22s %6.1fs", name, took)
        else:
            log.info("%-22s %6.1fs  %s", name, took, result)
    log.info("total %.1fs, artifacts in %s\n", time.perf_counter() - t_start, cfg.workdir)
    sys.stdout.write(pipeline.render_report(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
