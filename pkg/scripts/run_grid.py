#!/usr/bin/env python3
"""Train and decode the method x unit x LM grid, then print the results table.

    python3 scripts/run_grid.py --out runs/full              # default settings
    python3 scripts/run_grid.py --out runs/quick --quick     # a small smoke run
    python3 scripts/run_grid.py --config scripts/grid.ini --out runs/x
"""

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from seqtrans.harness.config import DecodeConfig, ExperimentConfig, ModelConfig, SyntheticTask, load_config
from seqtrans.harness.data import generate
from seqtrans.harness.evaluate import run_grid
from seqtrans.scoring import REFERENCE_ROW, render_table

QUICK = dict(
    task=SyntheticTask(n_train=30, n_test=8, lexicon_size=6),
    model=ModelConfig(enc_hidden=8, att_dim=8, dec_dim=8, subword_size=12),
    decode=DecodeConfig(beam=4),
)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quick", action="store_true", help="shrink data, model and beam for a fast run")
    p.add_argument("--reference-row", action="store_true", help="append the published baseline row")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.quick:
        cfg = dataclasses.replace(cfg, **QUICK, train=dataclasses.replace(cfg.train, epochs=2))
    ds = generate(cfg.task)
    start = time.perf_counter()
    cells = run_grid(cfg, ds.train, ds.test, args.out)
    rows = [c.row for c in cells] + ([REFERENCE_ROW] if args.reference_row else [])
    sys.stdout.write(render_table(rows))
    print(f"\n{len(cells)} cells in {time.perf_counter() - start:.0f} s; files under {Path(args.out)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
