"""Diagonal-covariance GMMs trained by EM, and log-likelihood-ratio scoring."""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import FormatError
from .frontends import FeatureMatrix

logger = logging.getLogger(__name__)

_CHUNK = 8192  # fixed E-step block size keeps accumulation order independent of threads
_EPS = 10 * np.finfo(np.float64).eps
_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class TrainConfig:
    num_components: int = 512
    max_iters: int = 50
    tol: float = 1e-5
    variance_floor_factor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.num_components < 1:
            raise ValueError("num_components must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, D)
    variances: np.ndarray  # (M, D)
    train_meta: dict = field(default_factory=dict)

    @property
    def num_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _as_array(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.frames
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a (frames, dims) array, got shape {x.shape}")
    return x


def _component_logpdf(x, weights, means, variances):
    """(N, M) matrix of log w_m + log N(x | mu_m, diag var_m)."""
    prec = 1.0 / variances
    const = np.log(weights) - 0.5 * (means.shape[1] * _LOG_2PI + np.log(variances).sum(1)
                                     + (means ** 2 * prec).sum(1))
    quad = (x ** 2) @ prec.T - 2.0 * x @ (means * prec).T
    return const - 0.5 * quad


def gmm_loglik(model: GmmModel, features) -> np.ndarray:
    """Per-frame log density under the mixture."""
    x = _as_array(features)
    if x.shape[1] != model.dim:
        raise ValueError(f"feature dimension {x.shape[1]} does not match model dimension {model.dim}")
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], _CHUNK):
        block = x[start: start + _CHUNK]
        out[start: start + len(block)] = logsumexp(
            _component_logpdf(block, model.weights, model.means, model.variances), axis=1)
    return out


def llr_score(bona: GmmModel, spoof: GmmModel, features) -> float:
    """Frame-averaged log-likelihood ratio; higher means more bona fide."""
    x = _as_array(features)
    if x.shape[0] == 0:
        raise ValueError("cannot score an utterance with no frames")
    return float(np.mean(gmm_loglik(bona, x) - gmm_loglik(spoof, x)))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _kmeanspp(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    # inverse-CDF draws: a row-duplicated dataset selects the same points
    n = x.shape[0]
    centers = [x[min(int(rng.random() * n), n - 1)]]
    d2 = ((x - centers[0]) ** 2).sum(1)
    for _ in range(1, m):
        total = d2.sum()
        u = rng.random()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), u * total, side="right"))
        else:
            idx = int(u * n)
        c = x[min(idx, n - 1)]
        centers.append(c)
        d2 = np.minimum(d2, ((x - c) ** 2).sum(1))
    return np.array(centers)


def _hard_assign(x, centers):
    labels = np.empty(x.shape[0], dtype=np.int64)
    c2 = (centers ** 2).sum(1)
    for start in range(0, x.shape[0], _CHUNK):
        block = x[start: start + _CHUNK]
        labels[start: start + len(block)] = np.argmin(c2 - 2.0 * block @ centers.T, axis=1)
    return labels


def _reseed_empty(x, labels, m):
    """Give each empty component the point farthest from the mean of the widest component."""
    counts = np.bincount(labels, minlength=m)
    for j in np.nonzero(counts == 0)[0]:
        spread = np.full(m, -1.0)
        for c in np.nonzero(counts >= 2)[0]:
            spread[c] = x[labels == c].var(0).sum()
        donor = int(np.argmax(spread))
        members = np.nonzero(labels == donor)[0]
        far = members[np.argmax(((x[members] - x[members].mean(0)) ** 2).sum(1))]
        labels[far] = j
        counts[donor] -= 1
        counts[j] += 1
        logger.debug("re-seeded empty component %d from component %d", j, donor)
    return labels


def _estep(x, weights, means, variances):
    m, d = means.shape
    nk, s1, s2 = np.zeros(m), np.zeros((m, d)), np.zeros((m, d))
    total = 0.0
    for start in range(0, x.shape[0], _CHUNK):
        block = x[start: start + _CHUNK]
        logp = _component_logpdf(block, weights, means, variances)
        norm = logsumexp(logp, axis=1)
        total += norm.sum()
        resp = np.exp(logp - norm[:, None])
        nk += resp.sum(0)
        s1 += resp.T @ block
        s2 += resp.T @ block ** 2
    return total, nk, s1, s2


def _mstep(n, nk, s1, s2, old_means, old_vars, floor):
    weights = (nk + _EPS) / (n + _EPS * len(nk))
    weights = weights / weights.sum()
    alive = nk > 0
    safe = np.where(alive, nk, 1.0)[:, None]
    means = np.where(alive[:, None], s1 / safe, old_means)
    variances = np.where(alive[:, None], s2 / safe - means ** 2, old_vars)
    return weights, means, np.maximum(variances, floor)


def gmm_train(features, config: TrainConfig = TrainConfig()) -> GmmModel:
    """EM from a seeded k-means++ start followed by one hard-assignment M-step."""
    x = _as_array(features)
    n, d = x.shape
    m = config.num_components
    if n < m:
        raise ValueError(f"need at least {m} frames to train {m} components, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("training features contain non-finite values")

    floor = np.maximum(config.variance_floor_factor * x.var(0), np.finfo(np.float64).tiny)
    rng = np.random.default_rng(config.seed)
    labels = _reseed_empty(x, _hard_assign(x, _kmeanspp(x, m, rng)), m)

    nk = np.bincount(labels, minlength=m).astype(np.float64)
    s1 = np.zeros((m, d))
    s2 = np.zeros((m, d))
    np.add.at(s1, labels, x)
    np.add.at(s2, labels, x ** 2)
    weights, means, variances = _mstep(n, nk, s1, s2, np.zeros((m, d)), np.ones((m, d)), floor)

    history = []
    converged = False
    for it in range(config.max_iters):
        ll, nk, s1, s2 = _estep(x, weights, means, variances)
        history.append(ll)
        if it > 0 and abs(ll - history[-2]) < config.tol * abs(history[-2]):
            converged = True
            break
        weights, means, variances = _mstep(n, nk, s1, s2, means, variances, floor)
    if not converged:
        history.append(_estep(x, weights, means, variances)[0])
    logger.info("trained %d-component GMM on %d frames: %d log-likelihood evaluations, final %.6g",
                m, n, len(history), history[-1])
    meta = {
        "seed": config.seed,
        "iterations": len(history) - 1,
        "final_loglik": history[-1],
        "loglik_history": history,
        "converged": converged,
    }
    return GmmModel(weights, means, variances, meta)


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

_MAGIC = b"SSGM"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")


def save_model(path, model: GmmModel):
    m, d = model.means.shape
    meta = json.dumps(model.train_meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, m, d))
        for arr in (model.weights, model.means, model.variances):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_model(path) -> GmmModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated model header")
    magic, version, m, d = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    offset = _HEADER.size
    need = offset + 8 * (m + 2 * m * d) + 4
    if len(data) < need:
        raise FormatError(f"{path}: truncated model body")
    arrays = []
    for count, shape in ((m, (m,)), (m * d, (m, d)), (m * d, (m, d))):
        arrays.append(np.frombuffer(data, "<f8", count, offset).reshape(shape).astype(np.float64))
        offset += 8 * count
    (length,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if len(data) != offset + length:
        raise FormatError(f"{path}: metadata length mismatch")
    meta = json.loads(data[offset:].decode("utf-8")) if length else {}
    return GmmModel(*arrays, train_meta=meta)


def model_paths(directory) -> tuple[str, str]:
    directory = os.fspath(directory)
    return os.path.join(directory, "bonafide.ssgm"), os.path.join(directory, "spoof.ssgm")
