"""Equal error rate on the ROC convex hull, pooled and per attack."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)

BONAFIDE = "bonafide"


class EmptyAttackWarning(UserWarning):
    """A requested attack had no spoof trials and was left out of the result."""


@dataclass(frozen=True)
class ScoreRecord:
    utterance_id: str
    attack_id: str
    key: Literal["bonafide", "spoof"]
    score: float

    def __post_init__(self):
        if self.key not in ("bonafide", "spoof"):
            raise ValueError(f"key must be 'bonafide' or 'spoof', got {self.key!r}")
        if (self.key == "bonafide") != (self.attack_id == BONAFIDE):
            raise ValueError(f"{self.utterance_id}: key {self.key!r} inconsistent with attack {self.attack_id!r}")
        if not np.isfinite(self.score):
            raise ValueError(f"{self.utterance_id}: score is not finite")


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    num_bonafide: int
    num_spoof: int

    @property
    def percent(self) -> float:
        return 100.0 * self.eer


def _pav_blocks(tar_counts, non_counts):
    """Pool adjacent violators over score groups; returns per-block (tar, non) counts."""
    blocks = []  # [tar, non, first_group, last_group]
    for g, (t, n) in enumerate(zip(tar_counts, non_counts)):
        blocks.append([t, n, g, g])
        # merge while the target rate fails to increase
        while len(blocks) > 1:
            t1, n1 = blocks[-2][0], blocks[-2][1]
            t2, n2 = blocks[-1][0], blocks[-1][1]
            if t1 * (t2 + n2) >= t2 * (t1 + n1):
                last = blocks.pop()
                blocks[-1][0] += last[0]
                blocks[-1][1] += last[1]
                blocks[-1][3] = last[3]
            else:
                break
    return blocks


def rocch(bona_scores, spoof_scores):
    """ROC convex hull vertices.

    Returns ``(pmiss, pfa, thresholds)``; vertex ``i`` is the operating point
    that rejects every score strictly below ``thresholds[i]``.  Tied scores
    always move together, so ties form a single ROC step.
    """
    tar = np.asarray(bona_scores, dtype=np.float64)
    non = np.asarray(spoof_scores, dtype=np.float64)
    if tar.size == 0 or non.size == 0:
        raise ValueError("EER needs at least one bona fide and one spoof score")
    scores = np.concatenate([tar, non])
    labels = np.concatenate([np.ones(tar.size, int), np.zeros(non.size, int)])
    uniq, inverse = np.unique(scores, return_inverse=True)
    tar_counts = np.bincount(inverse, weights=labels, minlength=uniq.size).astype(np.int64)
    non_counts = np.bincount(inverse, weights=1 - labels, minlength=uniq.size).astype(np.int64)

    blocks = _pav_blocks(tar_counts, non_counts)
    pmiss = [0.0]
    pfa = [1.0]
    thresholds = [uniq[0]]
    miss, fa = 0, non.size
    for t, n, _, last in blocks:
        miss += t
        fa -= n
        pmiss.append(miss / tar.size)
        pfa.append(fa / non.size)
        thresholds.append(uniq[last + 1] if last + 1 < uniq.size else np.nextafter(uniq[-1], np.inf))
    return np.array(pmiss), np.array(pfa), np.array(thresholds)


def _hull_eer(pmiss, pfa, thresholds):
    eer, thr = 0.0, float(thresholds[0])
    for i in range(len(pmiss) - 1):
        x1, x2 = pfa[i], pfa[i + 1]
        y1, y2 = pmiss[i], pmiss[i + 1]
        if x1 == x2 or y1 == y2:
            continue
        # line a*x + b*y = 1 through both vertices meets x = y at 1 / (a + b)
        det = x1 * y2 - x2 * y1
        a = (y2 - y1) / det
        b = (x1 - x2) / det
        candidate = 1.0 / (a + b)
        if candidate > eer:
            eer = candidate
            alpha = (x1 - candidate) / (x1 - x2)
            thr = float(thresholds[i] + alpha * (thresholds[i + 1] - thresholds[i]))
    if eer == 0.0:
        # perfect separation: any threshold between the two classes
        i = int(np.argmax((pmiss == 0) & (pfa == 0))) if np.any((pmiss == 0) & (pfa == 0)) else 0
        thr = float(thresholds[i])
    return float(eer), thr


def eer_from_scores(bona_scores, spoof_scores) -> EerResult:
    pmiss, pfa, thresholds = rocch(bona_scores, spoof_scores)
    eer, thr = _hull_eer(pmiss, pfa, thresholds)
    return EerResult(eer, thr, len(np.atleast_1d(bona_scores)), len(np.atleast_1d(spoof_scores)))


def _split(records: Iterable[ScoreRecord]):
    bona = [r.score for r in records if r.key == "bonafide"]
    spoof = [r.score for r in records if r.key == "spoof"]
    return bona, spoof


def rocch_eer(records: Iterable[ScoreRecord]) -> EerResult:
    bona, spoof = _split(list(records))
    if not bona or not spoof:
        raise ValueError("EER needs both bona fide and spoof records")
    return eer_from_scores(bona, spoof)


def empirical_eer(bona_scores, spoof_scores) -> float:
    """min over thresholds of max(miss, false alarm), without hull interpolation."""
    tar = np.sort(np.asarray(bona_scores, dtype=np.float64))
    non = np.sort(np.asarray(spoof_scores, dtype=np.float64))
    cuts = np.concatenate([np.unique(np.concatenate([tar, non])), [np.inf]])
    miss = np.searchsorted(tar, cuts, side="left") / tar.size
    fa = 1.0 - np.searchsorted(non, cuts, side="left") / non.size
    return float(np.min(np.maximum(miss, fa)))


def per_attack_eer(records: Iterable[ScoreRecord], attacks: Iterable[str] | None = None) -> dict[str, EerResult]:
    """EER of all bona fide trials against each attack's spoof trials."""
    records = list(records)
    bona = [r.score for r in records if r.key == "bonafide"]
    if not bona:
        raise ValueError("per-attack EER needs bona fide records")
    by_attack: dict[str, list[float]] = {}
    for r in records:
        if r.key == "spoof":
            by_attack.setdefault(r.attack_id, []).append(r.score)
    wanted = sorted(by_attack) if attacks is None else list(attacks)
    if not wanted:
        raise ValueError("per-attack EER needs at least one attack")
    out = {}
    for attack in wanted:
        spoof = by_attack.get(attack)
        if not spoof:
            msg = f"attack {attack} has no spoof trials; omitted"
            logger.warning(msg)
            warnings.warn(msg, EmptyAttackWarning, stacklevel=2)
            continue
        out[attack] = eer_from_scores(bona, spoof)
    return out


# ---------------------------------------------------------------------------
# score file
# ---------------------------------------------------------------------------


def format_score(value: float) -> str:
    return format(float(value), ".17g")


def write_scores(path, records: Iterable[ScoreRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.utterance_id}\t{r.attack_id}\t{r.key}\t{format_score(r.score)}\n")


def read_scores(path) -> list[ScoreRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            try:
                out.append(ScoreRecord(parts[0], parts[1], parts[2], float(parts[3])))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_eer(path, result: EerResult):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"eer\t{format_score(result.eer)}\n")
        fh.write(f"threshold\t{format_score(result.threshold)}\n")
        fh.write(f"num_bonafide\t{result.num_bonafide}\n")
        fh.write(f"num_spoof\t{result.num_spoof}\n")


def read_eer(path) -> EerResult:
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                key, value = line.rstrip("\n").split("\t")
                fields[key] = value
    try:
        return EerResult(float(fields["eer"]), float(fields["threshold"]),
                         int(fields["num_bonafide"]), int(fields["num_spoof"]))
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
