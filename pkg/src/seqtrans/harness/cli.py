"""Command-line entry point: ``seqtrans {gen,train,decode,score,table,grid}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..numerics import ContractError
from ..scoring import REFERENCE_ROW, ErrorReport, TableRow, render_table, report_files
from . import data as datamod
from .config import LM_KINDS, METHODS, UNIT_KINDS, ExperimentConfig, load_config
from .evaluate import (
    beta_for,
    build_lm,
    decode_corpus,
    load_model,
    run_grid,
    save_model,
    train_model,
)


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def cmd_gen(args) -> int:
    cfg = _config(args)
    ds = datamod.generate(cfg.task)
    datamod.save_dataset(args.out, ds)
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test utterances to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    utts = datamod.load_split(args.data, "train")
    res = train_model(args.method, args.units, utts, cfg)
    save_model(args.out, res.model)
    for epoch, loss in enumerate(res.epoch_losses, 1):
        print(f"epoch {epoch} loss {loss:.4f}")
    return 0


def cmd_decode(args) -> int:
    cfg = _config(args)
    model = load_model(args.ckpt)
    utts = datamod.load_split(args.data, args.split)
    train_texts = [u.text for u in datamod.load_split(args.data, "train")]
    lm = build_lm(model, train_texts, args.lm, cfg.decode)
    if lm is None and args.lm != "none":
        raise ContractError(f"LM kind {args.lm!r} does not apply to {model.unit_kind} units")
    dcfg = cfg.decode if args.beam is None else dataclasses.replace(cfg.decode, beam=args.beam)
    hyps = decode_corpus(model, utts, dcfg, lm, beta_for(model.method, args.lm, dcfg), args.ctc_greedy)
    text = "".join(f"{u}\t{t}\n" for u, t in hyps)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_score(args) -> int:
    rep = report_files(args.ref, args.hyp, args.unit)
    if args.json:
        print(json.dumps(rep.as_record(), sort_keys=True))
    else:
        print(
            f"{'CER' if args.unit == 'char' else 'WER'} {rep.percent_str('error')}  n={rep.n_ref}  "
            f"Corr. {rep.percent_str('correct')}  Sub. {rep.percent_str('substitutions')}  "
            f"Del. {rep.percent_str('deletions')}  Ins. {rep.percent_str('insertions')}"
        )
    return 0


def _report(rec) -> ErrorReport:
    return ErrorReport(
        rec["unit"], rec["n_ref"], rec["correct"], rec["substitutions"], rec["deletions"], rec["insertions"]
    )


def cmd_table(args) -> int:
    rows = [REFERENCE_ROW] if args.reference_row else []
    for line in Path(args.records).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        rows.append(
            TableRow(
                rec["model"], rec["units"], rec["lexicon"], rec["lm"],
                _report(rec["char"]) if "char" in rec else None,
                _report(rec["word"]) if "word" in rec else None,
                rec.get("wer_text", ""),
            )
        )
    sys.stdout.write(render_table(rows))
    return 0


def cmd_grid(args) -> int:
    cfg = _config(args)
    if args.data:
        train_utts = datamod.load_split(args.data, "train")
        test_utts = datamod.load_split(args.data, "test")
    else:
        ds = datamod.generate(cfg.task)
        train_utts, test_utts = ds.train, ds.test
    run_grid(cfg, train_utts, test_utts, args.out)
    sys.stdout.write(Path(args.out, "results.txt").read_text(encoding="utf-8"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqtrans", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate the synthetic dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--method", choices=METHODS, required=True)
    t.add_argument("--units", choices=UNIT_KINDS, default="char")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="decode a split with a checkpoint")
    d.add_argument("--config")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--split", default="test")
    d.add_argument("--lm", choices=LM_KINDS, default="none")
    d.add_argument("--beam", type=int)
    d.add_argument("--ctc-greedy", action="store_true", help="decode a joint model through its CTC head")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decode)

    s = sub.add_parser("score", help="CER/WER of a hypothesis file")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--unit", choices=("char", "word"), default="word")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_score)

    tb = sub.add_parser("table", help="render result records as a table")
    tb.add_argument("--records", required=True)
    tb.add_argument("--reference-row", action="store_true", help="prepend the published baseline row")
    tb.set_defaults(func=cmd_table)

    gr = sub.add_parser("grid", help="train and decode the full grid")
    gr.add_argument("--config")
    gr.add_argument("--data", help="dataset directory (generated from the config if omitted)")
    gr.add_argument("--out", required=True)
    gr.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ContractError, ValueError, OSError, KeyError) as err:
        print(f"seqtrans: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
