"""Sub-band sweep: band-pass the corpus, retrain, score and grid the EERs.

Each cell of the sweep is one ``(f_min, f_max)`` band-pass configuration.  For
every cell the whole corpus is filtered in the signal domain, features are
extracted, bona fide and spoof GMMs are retrained and the evaluation partition
is scored.  Cells are independent; finished cells are persisted so a sweep can
be interrupted and resumed.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics
from .audio_io import requantize
from .corpus import Corpus, Utterance
from .dsp import BandConfig, CqtParams, bandpass
from .frontends import FEATURE_KINDS, FeatureMatrix, LfccParams, extract, read_features, write_features
from .gmm import TrainConfig, gmm_train, llr_score
from .metrics import EerResult, ScoreRecord

logger = logging.getLogger(__name__)

POOLED = "pooled"
CACHE_ENV = "SSL_CACHE_DIR"
EXECUTION_FIELDS = ("out_dir", "cache_dir", "workers")


@dataclass(frozen=True)
class SweepConfig:
    frontend: str = "cqcc-linear"
    grid_step: float = 400.0
    f_low_limit: float = 0.0
    f_high_limit: float | None = None  # None: Nyquist of the corpus
    train: TrainConfig = TrainConfig()
    cqt: CqtParams | None = None  # None: reference layout for the corpus rate
    lfcc: LfccParams = LfccParams()
    train_filtered: bool = True
    requantize: bool = True
    workers: int = 1
    attacks: tuple[str, ...] | None = None
    out_dir: str | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        if self.frontend not in FEATURE_KINDS:
            raise ValueError(f"unknown front-end {self.frontend!r}; choose from {FEATURE_KINDS}")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def high_limit(self, sample_rate: int) -> float:
        return sample_rate / 2.0 if self.f_high_limit is None else self.f_high_limit

    def cqt_params(self, sample_rate: int) -> CqtParams:
        return self.cqt if self.cqt is not None else CqtParams.default(sample_rate)

    def feature_digest(self, sample_rate: int) -> str:
        """Short hash of everything that determines the features of one utterance."""
        spec = {"frontend": self.frontend, "requantize": self.requantize, "rate": sample_rate}
        if self.frontend == "lfcc":
            spec["lfcc"] = dataclasses.asdict(self.lfcc)
        else:
            spec["cqt"] = dataclasses.asdict(self.cqt_params(sample_rate))
        return hashlib.sha1(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        """Fields that determine results; where and how the sweep runs is left out."""
        d = dataclasses.asdict(self)
        for name in EXECUTION_FIELDS:
            d.pop(name)
        d["attacks"] = list(self.attacks) if self.attacks is not None else None
        return d


def grid_edges(config: SweepConfig, sample_rate: int) -> np.ndarray:
    lo, hi = config.f_low_limit, config.high_limit(sample_rate)
    count = (hi - lo) / config.grid_step
    if abs(count - round(count)) > 1e-9:
        raise ValueError(f"grid step {config.grid_step} Hz does not divide [{lo}, {hi}] Hz")
    return lo + config.grid_step * np.arange(int(round(count)) + 1)


def enumerate_bands(config: SweepConfig, sample_rate: int = 16000) -> list[BandConfig]:
    """All valid bands, row-major in heatmap order: f_max descending, then f_min ascending."""
    edges = grid_edges(config, sample_rate)
    return [BandConfig(float(lo), float(hi)) for hi in edges[::-1] for lo in edges if lo < hi]


# ---------------------------------------------------------------------------
# feature cache and per-cell pipeline
# ---------------------------------------------------------------------------


def resolve_cache_dir(config: SweepConfig) -> str | None:
    return os.environ.get(CACHE_ENV) or config.cache_dir


class FeatureCache:
    """One SSLF file per (utterance, front-end configuration, band)."""

    def __init__(self, root):
        self.root = os.fspath(root)

    def path(self, utterance_id: str, digest: str, frontend: str, band_label: str) -> str:
        return os.path.join(self.root, f"{frontend}-{digest}", band_label, utterance_id + ".sslf")

    def get(self, *key) -> FeatureMatrix | None:
        path = self.path(*key)
        return read_features(path) if os.path.exists(path) else None

    def put(self, features: FeatureMatrix, *key):
        write_features(self.path(*key), features)


def utterance_features(utt: Utterance, band: BandConfig | None, config: SweepConfig,
                       sample_rate: int, cache: FeatureCache | None = None) -> FeatureMatrix:
    if band is not None and band.is_full_band(sample_rate):
        band = None
    label = "full" if band is None else band.label
    key = (utt.utterance_id, config.feature_digest(sample_rate), config.frontend, label)
    if cache is not None:
        hit = cache.get(*key)
        if hit is not None:
            return hit
    signal = utt.load()
    if signal.sample_rate != sample_rate:
        raise ValueError(f"{utt.utterance_id}: sample rate {signal.sample_rate} differs from corpus rate {sample_rate}")
    if band is not None:
        signal = bandpass(signal, band)
        if config.requantize:
            signal = requantize(signal)
    feats = extract(signal, config.frontend, config.cqt_params(sample_rate), config.lfcc,
                    {"utterance_id": utt.utterance_id, "band": label})
    if cache is not None:
        cache.put(feats, *key)
    return feats


def score_cell(band: BandConfig | None, config: SweepConfig, corpus: Corpus,
               cache: FeatureCache | None = None) -> list[ScoreRecord]:
    """Filter, extract, retrain both GMMs and score the evaluation partition."""
    rate = corpus.sample_rate
    train_band = band if config.train_filtered else None
    stacks = {"bonafide": [], "spoof": []}
    for utt in corpus.train:
        stacks[utt.key].append(utterance_features(utt, train_band, config, rate, cache).frames)
    for key, frames in stacks.items():
        if not frames:
            raise ValueError(f"training partition has no {key} utterances")
    bona = gmm_train(np.vstack(stacks["bonafide"]), config.train)
    spoof = gmm_train(np.vstack(stacks["spoof"]), config.train)
    return [
        ScoreRecord(u.utterance_id, u.attack_id, u.key,
                    llr_score(bona, spoof, utterance_features(u, band, config, rate, cache)))
        for u in corpus.eval
    ]


def cell_eers(records: list[ScoreRecord], attacks=None) -> dict[str, EerResult]:
    out = {POOLED: metrics.rocch_eer(records)}
    out.update(metrics.per_attack_eer(records, attacks))
    return out


def run_cell(band: BandConfig, config: SweepConfig, corpus: Corpus,
             cache: FeatureCache | None = None) -> dict[str, EerResult]:
    """Per-attack EERs (plus the pooled EER under ``"pooled"``) for one band."""
    return cell_eers(score_cell(band, config, corpus, cache), config.attacks)


def run_baseline(config: SweepConfig, corpus: Corpus, cache: FeatureCache | None = None) -> dict[str, EerResult]:
    """The unswept pipeline: no filtering anywhere."""
    return cell_eers(score_cell(None, config, corpus, cache), config.attacks)


# ---------------------------------------------------------------------------
# whole sweep with persistence
# ---------------------------------------------------------------------------


@dataclass
class CellError:
    band: BandConfig
    message: str


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cell_dir(out_dir, frontend: str, attack: str, band: BandConfig) -> str:
    return os.path.join(os.fspath(out_dir), frontend, attack, f"{band.f_min:g}-{band.f_max:g}")


def manifest_path(out_dir, frontend: str) -> str:
    return os.path.join(os.fspath(out_dir), frontend, "manifest.json")


def _write_cell(out_dir, frontend, band, records, eers):
    for attack in eers:
        d = cell_dir(out_dir, frontend, attack, band)
        os.makedirs(d, exist_ok=True)
        keep = records if attack == POOLED else [r for r in records if r.key == "bonafide" or r.attack_id == attack]
        metrics.write_scores(os.path.join(d, "scores.tsv"), keep)
        metrics.write_eer(os.path.join(d, "eer.txt"), eers[attack])


def _load_cell(out_dir, frontend, band, attacks) -> dict[str, EerResult] | None:
    out = {}
    for attack in attacks:
        path = os.path.join(cell_dir(out_dir, frontend, attack, band), "eer.txt")
        if not os.path.exists(path):
            return None
        out[attack] = metrics.read_eer(path)
    return out


def _cell_job(args):
    band, config, corpus = args
    cache_root = resolve_cache_dir(config)
    cache = FeatureCache(cache_root) if cache_root else None
    try:
        records = score_cell(band, config, corpus, cache)
        return band, records, cell_eers(records, config.attacks), None
    except Exception as exc:  # recorded in the manifest as an error marker
        logger.error("cell %s failed: %s", band.label, exc)
        return band, None, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def run_sweep(config: SweepConfig, corpus: Corpus, bands: list[BandConfig] | None = None
              ) -> dict[BandConfig, dict[str, EerResult] | CellError]:
    """Run (or resume) every cell; returns band -> per-attack EERs or a :class:`CellError`."""
    if bands is None:
        bands = enumerate_bands(config, corpus.sample_rate)
    attacks = [POOLED] + list(config.attacks if config.attacks is not None else corpus.attacks)
    manifest = {"config": config.to_dict(), "corpus": corpus.name, "sample_rate": corpus.sample_rate,
                "cells": {}}
    mpath = None
    if config.out_dir:
        mpath = manifest_path(config.out_dir, config.frontend)
        if os.path.exists(mpath):
            with open(mpath, encoding="utf-8") as fh:
                previous = json.load(fh)
            if (previous.get("config"), previous.get("sample_rate")) == (manifest["config"], corpus.sample_rate):
                manifest["cells"] = previous.get("cells", {})
            else:
                logger.warning("manifest %s was written for a different configuration; starting afresh", mpath)

    results: dict = {}
    pending = []
    for band in bands:
        entry = manifest["cells"].get(band.label)
        if config.out_dir and entry and entry.get("status") == "done":
            loaded = _load_cell(config.out_dir, config.frontend, band, attacks)
            if loaded is not None:
                results[band] = loaded
                continue
        pending.append(band)
    logger.info("sweep %s: %d cells, %d to run", config.frontend, len(bands), len(pending))

    def record(band, records, eers, error):
        if error is None:
            results[band] = eers
            if config.out_dir:
                _write_cell(config.out_dir, config.frontend, band, records, eers)
            manifest["cells"][band.label] = {"status": "done", "completed_at": time.time()}
        else:
            results[band] = CellError(band, error.splitlines()[0])
            manifest["cells"][band.label] = {"status": "error", "error": error, "completed_at": time.time()}
        if mpath:
            _atomic_write_text(mpath, json.dumps(manifest, indent=1, sort_keys=True))

    jobs = [(band, config, corpus) for band in pending]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for outcome in pool.map(_cell_job, jobs):
                record(*outcome)
    else:
        for job in jobs:
            record(*_cell_job(job))
    if mpath and not pending:
        _atomic_write_text(mpath, json.dumps(manifest, indent=1, sort_keys=True))
    return {band: results[band] for band in bands}


# ---------------------------------------------------------------------------
# grids, CSV and images
# ---------------------------------------------------------------------------


@dataclass
class EerGrid:
    """EERs in heatmap orientation: rows are f_max descending, columns f_min ascending.

    ``cells[r, c]`` is NaN where ``f_min >= f_max`` or the cell is missing.
    """

    f_min_edges: np.ndarray
    f_max_edges: np.ndarray
    cells: np.ndarray
    attack_id: str = ""
    frontend: str = ""

    def index(self, f_min: float, f_max: float) -> tuple[int, int]:
        rows = np.nonzero(np.isclose(self.f_max_edges, f_max))[0]
        cols = np.nonzero(np.isclose(self.f_min_edges, f_min))[0]
        if not rows.size or not cols.size:
            raise KeyError(f"band ({f_min}, {f_max}) is not on the grid")
        return int(rows[0]), int(cols[0])

    def value(self, f_min: float, f_max: float) -> float:
        return float(self.cells[self.index(f_min, f_max)])

    @property
    def valid(self) -> np.ndarray:
        return self.f_min_edges[None, :] < self.f_max_edges[:, None]


def assemble_grid(cells: dict, attack_id: str, edges=None, frontend: str = "") -> EerGrid:
    """Place per-band results (EerResult, per-attack dicts, or CellError) on the heatmap grid."""
    if edges is None:
        edges = sorted({b.f_min for b in cells} | {b.f_max for b in cells})
    edges = np.asarray(edges, dtype=np.float64)
    grid = EerGrid(edges[:-1].copy(), edges[::-1][:-1].copy(),
                   np.full((len(edges) - 1, len(edges) - 1), np.nan), attack_id, frontend)
    for band, result in cells.items():
        if isinstance(result, dict):
            result = result.get(attack_id)
        if isinstance(result, EerResult):
            grid.cells[grid.index(band.f_min, band.f_max)] = result.eer
    return grid


def write_grid_csv(grid: EerGrid, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["f_max\\f_min"] + [format(v, "g") for v in grid.f_min_edges])
        for r, fmax in enumerate(grid.f_max_edges):
            row = ["" if np.isnan(v) else metrics.format_score(v) for v in grid.cells[r]]
            w.writerow([format(fmax, "g")] + row)


def read_grid_csv(path, attack_id: str = "", frontend: str = "") -> EerGrid:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    f_min = np.array([float(v) for v in rows[0][1:]])
    f_max = np.array([float(r[0]) for r in rows[1:]])
    cells = np.array([[float(v) if v != "" else np.nan for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return EerGrid(f_min, f_max, cells.reshape(len(f_max), len(f_min)), attack_id, frontend)


EER_COLOR_MAX = 25.0  # percent; the colour scale saturates here
BACKGROUND = (1.0, 1.0, 1.0)


def render_heatmap(grid: EerGrid, cell_px: int = 8) -> np.ndarray:
    """RGB raster (uint8) with a fixed 0-25 % jet colour scale and a white invalid region."""
    from matplotlib import colormaps

    pct = np.clip(grid.cells * 100.0, 0.0, EER_COLOR_MAX) / EER_COLOR_MAX
    rgb = colormaps["jet"](np.nan_to_num(pct))[..., :3]
    rgb[np.isnan(grid.cells)] = BACKGROUND
    rgb = np.repeat(np.repeat(rgb, cell_px, axis=0), cell_px, axis=1)
    return np.round(rgb * 255).astype(np.uint8)


def export_heatmap(grid: EerGrid, out_prefix, cell_px: int = 8) -> tuple[str, str]:
    """Write ``<out_prefix>.csv`` and ``<out_prefix>.png``."""
    import matplotlib.pyplot as plt

    out_prefix = os.fspath(out_prefix)
    directory = os.path.dirname(out_prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    csv_path, png_path = out_prefix + ".csv", out_prefix + ".png"
    write_grid_csv(grid, csv_path)
    plt.imsave(png_path, render_heatmap(grid, cell_px))
    return csv_path, png_path


def plot_heatmap(grid: EerGrid, ax=None, title: str | None = None):
    """Annotated heatmap with kHz axes and an EER (%) colour bar."""
    import matplotlib.pyplot as plt

    if ax is None:
        _, ax = plt.subplots(figsize=(4, 4))
    data = np.ma.masked_invalid(grid.cells * 100.0)
    step = grid.f_min_edges[1] - grid.f_min_edges[0] if len(grid.f_min_edges) > 1 else 1.0
    extent = [grid.f_min_edges[0] / 1e3, (grid.f_min_edges[-1] + step) / 1e3,
              (grid.f_max_edges[-1] - step) / 1e3, grid.f_max_edges[0] / 1e3]
    im = ax.imshow(data, cmap="jet", vmin=0, vmax=EER_COLOR_MAX, extent=extent, aspect="auto")
    ax.set_xlabel("f_min (kHz)")
    ax.set_ylabel("f_max (kHz)")
    ax.set_title(title if title is not None else f"{grid.frontend} {grid.attack_id}".strip())
    ax.figure.colorbar(im, ax=ax, label="EER (%)")
    return ax


def load_sweep_results(out_dir, frontend: str, attack: str) -> dict[BandConfig, EerResult]:
    """Collect the persisted per-cell EERs of one attack."""
    root = os.path.join(os.fspath(out_dir), frontend, attack)
    if not os.path.isdir(root):
        raise FileNotFoundError(f"no sweep results under {root}")
    out = {}
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name, "eer.txt")
        if os.path.exists(path):
            lo, hi = (float(v) for v in name.split("-"))
            out[BandConfig(lo, hi)] = metrics.read_eer(path)
    return out
