"""Command-line interface: ``subband-cm <command> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import re
import sys
import warnings

import numpy as np

from . import metrics
from .audio_io import load_config, parse_override
from .config import RunConfig, run_config_from_mapping
from .corpus import SYNTH_KINDS, write_corpus, synthetic_corpus
from .dsp import BandConfig
from .errors import ConfigurationError, FormatError
from .frontends import read_features, write_features
from .gmm import gmm_train, llr_score, load_model, model_paths, save_model
from .sweep import (FeatureCache, POOLED, assemble_grid, export_heatmap, load_sweep_results, resolve_cache_dir,
                    run_sweep, utterance_features)

logger = logging.getLogger("subband_cm")


def attack_order(attacks) -> list[str]:
    """Natural order, so A7 < A07 < A10 and tables read A07..A19."""
    def key(a):
        return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", a)]
    return sorted(attacks, key=key)


def _parse_band(text: str | None) -> BandConfig | None:
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split("-"))
    except ValueError:
        raise ConfigurationError(f"band must look like FMIN-FMAX, got {text!r}") from None
    return BandConfig(lo, hi)


def _run_config(args) -> RunConfig:
    mapping = load_config(args.config) if args.config else {}
    for item in args.set or []:
        key, value = parse_override(item)
        mapping[key] = value
    for attr, key in (("frontend", "frontend"), ("seed", "seed"), ("components", "gmm.num_components"),
                      ("iters", "gmm.max_iters"), ("step", "sweep.grid_step"), ("workers", "sweep.workers"),
                      ("attacks", "sweep.attacks"), ("cache_dir", "cache_dir")):
        value = getattr(args, attr, None)
        if value is not None:
            mapping[key] = value
    return run_config_from_mapping(mapping)


def _feature_source(args, run: RunConfig, corpus):
    """Callable giving features of an utterance, from ``--features`` or extracted on the fly."""
    band = _parse_band(getattr(args, "band", None))
    if band is not None:
        band.validate(corpus.sample_rate)
    if getattr(args, "features", None):
        def load(utt):
            return read_features(os.path.join(args.features, utt.utterance_id + ".sslf"))
        return load
    sweep_cfg = run.sweep_config(corpus.sample_rate)
    root = resolve_cache_dir(sweep_cfg)
    cache = FeatureCache(root) if root else None

    def compute(utt):
        return utterance_features(utt, band, sweep_cfg, corpus.sample_rate, cache)
    return compute


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    corpus = synthetic_corpus(args.kind, args.num_per_class, args.seed, duration=args.duration)
    paths = write_corpus(corpus, args.out)
    cfg_path = os.path.join(args.out, "corpus.cfg")
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write(f"corpus.train_protocol = {os.path.abspath(paths['train'])}\n")
        fh.write(f"corpus.train_audio = {os.path.abspath(os.path.join(args.out, 'train'))}\n")
        fh.write(f"corpus.eval_protocol = {os.path.abspath(paths['eval'])}\n")
        fh.write(f"corpus.eval_audio = {os.path.abspath(os.path.join(args.out, 'eval'))}\n")
    print(f"wrote {len(corpus.train) + len(corpus.eval)} utterances and {cfg_path}")
    return 0


def cmd_extract(args) -> int:
    run = _run_config(args)
    corpus = run.load_corpus()
    get = _feature_source(args, run, corpus)
    os.makedirs(args.out, exist_ok=True)
    utts = corpus.partition(args.partition)
    for utt in utts:
        write_features(os.path.join(args.out, utt.utterance_id + ".sslf"), get(utt))
    print(f"extracted {len(utts)} {run.frontend} feature files to {args.out}")
    return 0


def cmd_train(args) -> int:
    run = _run_config(args)
    corpus = run.load_corpus()
    get = _feature_source(args, run, corpus)
    stacks = {"bonafide": [], "spoof": []}
    for utt in corpus.train:
        stacks[utt.key].append(get(utt).frames)
    os.makedirs(args.out, exist_ok=True)
    for key, path in zip(("bonafide", "spoof"), model_paths(args.out)):
        if not stacks[key]:
            raise ConfigurationError(f"training partition has no {key} utterances")
        save_model(path, gmm_train(np.vstack(stacks[key]), run.train))
    print(f"trained bona fide and spoof models in {args.out}")
    return 0


def cmd_score(args) -> int:
    run = _run_config(args)
    corpus = run.load_corpus()
    get = _feature_source(args, run, corpus)
    bona_path, spoof_path = model_paths(args.models)
    bona, spoof = load_model(bona_path), load_model(spoof_path)
    records = [metrics.ScoreRecord(u.utterance_id, u.attack_id, u.key, llr_score(bona, spoof, get(u)))
               for u in corpus.partition(args.partition)]
    metrics.write_scores(args.out, records)
    print(f"scored {len(records)} utterances to {args.out}")
    return 0


def format_eer_table(pooled: metrics.EerResult, per_attack: dict[str, metrics.EerResult]) -> str:
    names = ["pooled"] + attack_order(per_attack)
    values = [pooled] + [per_attack[a] for a in names[1:]]
    widths = [max(len(n), 6) for n in names]
    head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
    row = "  ".join(f"{v.percent:.2f}".rjust(w) for v, w in zip(values, widths))
    return head + "\n" + row


def cmd_eer(args) -> int:
    records = metrics.read_scores(args.scores)
    pooled = metrics.rocch_eer(records)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", metrics.EmptyAttackWarning)
        per_attack = metrics.per_attack_eer(records)
    print(format_eer_table(pooled, per_attack))
    if args.out:
        metrics.write_eer(args.out, pooled)
    return 0


def cmd_sweep(args) -> int:
    run = _run_config(args)
    if args.out:
        run = dataclasses.replace(run, out_dir=args.out)
    if not run.out_dir:
        raise ConfigurationError("sweep needs an output directory (--out or out_dir)")
    corpus = run.load_corpus()
    config = run.sweep_config(corpus.sample_rate)
    results = run_sweep(config, corpus)
    failed = [b.label for b, r in results.items() if not isinstance(r, dict)]
    print(f"{len(results)} cells, {len(results) - len(failed)} done, {len(failed)} failed")
    for label in failed:
        print(f"failed: {label}", file=sys.stderr)
    return 1 if failed else 0


def cmd_heatmap(args) -> int:
    manifest = os.path.join(args.results, args.frontend, "manifest.json")
    cells = load_sweep_results(args.results, args.frontend, args.attack)
    edges = None
    if os.path.exists(manifest):
        with open(manifest, encoding="utf-8") as fh:
            manifest_data = json.load(fh)
        saved = manifest_data["config"]
        rate = manifest_data.get("sample_rate", 16000)
        lo = saved["f_low_limit"]
        hi = saved["f_high_limit"] if saved["f_high_limit"] is not None else rate / 2
        count = int(round((hi - lo) / saved["grid_step"]))
        edges = lo + saved["grid_step"] * np.arange(count + 1)
    grid = assemble_grid(cells, args.attack, edges, args.frontend)
    prefix = args.out or os.path.join(args.results, args.frontend, f"heatmap-{args.attack}")
    csv_path, png_path = export_heatmap(grid, prefix)
    print(f"wrote {csv_path} and {png_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--frontend", choices=("cqcc-linear", "cqcc-geometric", "lfcc"))
    p.add_argument("--seed", type=int)
    p.add_argument("--components", type=int, help="GMM components per class")
    p.add_argument("--iters", type=int, help="maximum EM iterations")
    p.add_argument("--cache-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subband-cm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a synthetic validation corpus")
    p.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    p.add_argument("--num-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract features for one partition")
    _add_common(p)
    p.add_argument("--partition", choices=("train", "eval"), default="train")
    p.add_argument("--band", help="band-pass FMIN-FMAX in Hz before extraction")
    p.add_argument("--out", required=True, help="directory for .sslf files")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train bona fide and spoof GMMs")
    _add_common(p)
    p.add_argument("--features", help="directory of .sslf files from 'extract'")
    p.add_argument("--band")
    p.add_argument("--out", required=True, help="model directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a partition with trained models")
    _add_common(p)
    p.add_argument("--models", required=True)
    p.add_argument("--features")
    p.add_argument("--band")
    p.add_argument("--partition", choices=("train", "eval"), default="eval")
    p.add_argument("--out", required=True, help="score file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eer", help="pooled and per-attack EER table of a score file")
    p.add_argument("scores")
    p.add_argument("--out", help="also write the pooled EER record here")
    p.set_defaults(func=cmd_eer)

    p = sub.add_parser("sweep", help="run the band-pass grid")
    _add_common(p)
    p.add_argument("--step", type=float, help="grid step in Hz")
    p.add_argument("--workers", type=int)
    p.add_argument("--attacks", help="comma-separated attack labels")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="CSV and image from persisted sweep cells")
    p.add_argument("--results", required=True, help="sweep output directory")
    p.add_argument("--frontend", required=True, choices=("cqcc-linear", "cqcc-geometric", "lfcc"))
    p.add_argument("--attack", default=POOLED)
    p.add_argument("--out", help="output prefix; .csv and .png are appended")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigurationError, FormatError, ValueError, OSError, KeyError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
