"""Command-line entry point: `atca {synth,extract,train,eval,report,validate}`.

Exit status: 0 on success, 1 on a runtime error, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .core import StrokeType
from .errors import AtcaError
from .evaluation import EvalConfig
from .features import NormalizationMode
from .pipeline import register_user
from .synth import generate_population, validate_population

log = logging.getLogger("atca")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig(seed=0)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "corpus", None):
        changes["corpus_path"] = str(args.corpus)
        changes["population"] = None
    if getattr(args, "normalization", None):
        changes["evaluation"] = replace(cfg.evaluation, normalization=NormalizationMode(args.normalization))
    if getattr(args, "experiment", None):
        changes["experiments"] = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    if changes:
        d = cfg.to_dict()
        for k, v in changes.items():
            d[k] = v.to_dict() if isinstance(v, EvalConfig) else (list(v) if isinstance(v, tuple) else v)
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.population is None:
        raise AtcaError("synth needs a population config, not a corpus path")
    corpus = generate_population(cfg.population, workers=args.threads)
    io.write_corpus(corpus, args.out, config_hash=cfg.hash(), seed=cfg.seed)
    print(f"wrote {len(corpus)} strokes to {args.out}")
    return 0


def cmd_extract(args) -> int:
    meta = io.read_corpus_header(args.corpus)
    corpus = io.read_corpus(args.corpus)
    io.write_features(corpus, args.out, config_hash=meta["config_hash"], seed=int(meta["seed"]))
    print(f"wrote features of {len(corpus)} strokes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    corpus = io.read_corpus(args.corpus)
    settings = None
    if args.fixed_settings:
        settings = sorted({corpus.resolve(s, StrokeType.HORIZONTAL) for s in corpus.settings_for(StrokeType.HORIZONTAL)})
    bank = register_user(corpus, args.user, cfg.registration, seed=cfg.seed, settings=settings)
    io.write_bank(bank, args.out, config_hash=cfg.hash())
    print(f"wrote {len(bank)} classifiers for user {args.user} to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .experiment import run_experiment

    cfg = _config(args)
    res = run_experiment(cfg, out_dir=args.out, workers=args.threads)
    print(_render(res["summary"]))
    return 0


def cmd_report(args) -> int:
    path = Path(args.report_dir) / "summary.json"
    if not path.exists():
        raise AtcaError(f"no summary.json in {args.report_dir}")
    print(_render(json.loads(path.read_text())))
    return 0


def cmd_validate(args) -> int:
    corpus = io.read_corpus(args.corpus)
    stats = validate_population(corpus, seed=args.seed or 0)
    print(json.dumps(stats, indent=1, sort_keys=True))
    ok = stats["stability_margin"] > 0 and stats["sensitivity_score"] >= args.min_sensitivity
    return 0 if ok else 1


def _render(summary: dict) -> str:
    lines = [f"config {summary['config_hash']} seed {summary['seed']} normalization {summary['normalization']}"]
    for t, table in summary.get("systems", {}).items():
        lines.append(f"[{t}] system            RA mean(std)      TA mean(std)")
        for name, row in table.items():
            ra, ta = row["RA"], row["TA"]
            lines.append(f"[{t}] {name:<20} {ra[0]:.3f}({ra[1]:.4f})   {ta[0]:.3f}({ta[1]:.4f})")
    for scenario, curves in summary.get("settings_count", {}).items():
        for t, pts in curves.items():
            lines.append(f"[{t}] settings-count {scenario}: " + ", ".join(f"n={p['n']}: {p['mean']:.3f}" for p in pts))
    lc = summary.get("learning_curve")
    if lc:
        lines.append(f"learning curve {lc['classifier']} ({lc['stroke_type']}), positives {lc['positives']}")
        for name, pts in lc["series"].items():
            lines.append(f"  {name}: " + " ".join(f"{p['eer']:.3f}" for p in pts))
    pa = summary.get("persistent_attack")
    if pa:
        lines.append(f"persistent attack: n={pa['n_settings']} mean tries {pa['mean_tries']:.3f} over {pa['trials']} trials")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="atca", description="Adaptive touch-based continuous authentication toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, corpus=False, out=True):
        sp.add_argument("--config", type=Path, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        if corpus:
            sp.add_argument("--corpus", type=Path, required=True, help="corpus file")
        if out:
            sp.add_argument("--out", type=Path, required=True, help="output path")

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("extract", help="write the feature table of a corpus")
    common(sp, corpus=True)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="register one user and write the classifier bank")
    common(sp, corpus=True)
    sp.add_argument("--user", type=int, required=True)
    sp.add_argument("--fixed-settings", action="store_true", help="use every corpus setting instead of sampling bins")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="run evaluation experiments and write reports")
    common(sp)
    sp.add_argument("--corpus", type=Path, help="corpus file (default: generate from the config)")
    sp.add_argument("--experiment", choices=EXPERIMENTS + ("all",), default=None)
    sp.add_argument("--normalization", choices=[m.value for m in NormalizationMode], default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("report", help="print the summary of a report directory")
    sp.add_argument("report_dir", type=Path)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("validate", help="check stability and sensitivity of a corpus")
    sp.add_argument("--corpus", type=Path, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--min-sensitivity", type=float, default=0.7)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ATCA_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (AtcaError, OSError, ValueError, KeyError) as e:
        print(f"atca {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
