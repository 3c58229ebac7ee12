"""Intermediate classifiers: window features, multi-Gaussian classes, a small MLP."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_softmax

from .core import MODEL_FORMAT_VERSION, FrameStream, Segmentation, read_model_json, write_json
from .gmm import FullGmm, fit_full_gmm

COV_FLOOR_SCALE = 1e-4


# ---------------------------------------------------------------------------
# window features


@dataclass
class WindowReport:
    skipped: list = field(default_factory=list)


def extract_window_features(stream: FrameStream, segmentation: Segmentation | Iterable,
                            window_ms: float = 60.0, report: WindowReport | None = None):
    """Mean frame over ``[mid - w/2, mid + w/2)`` around each interval midpoint.

    Frames are timed by their start. Returns ``[(label, vector), ...]``;
    intervals whose window holds no frame are skipped and reported.
    """
    period = stream.period_ms
    n = len(stream)
    out = []
    for iv in segmentation:
        lo_t = iv.midpoint - window_ms / 2
        hi_t = iv.midpoint + window_ms / 2
        lo = max(0, int(np.ceil(lo_t / period)))
        hi = min(n, int(np.ceil(hi_t / period)))
        if hi <= lo:
            if report is not None:
                report.skipped.append(iv)
            continue
        out.append((iv.label, stream.frames[lo:hi].mean(axis=0)))
    return out


def _stack(samples):
    labels = [lab for lab, _ in samples]
    X = np.array([np.asarray(v, dtype=float) for _, v in samples])
    return labels, X


# ---------------------------------------------------------------------------
# multi-Gaussian classifier


@dataclass
class MultiGaussianModel:
    labels: list
    mixtures: list  # FullGmm per label, same order
    dim: int

    def log_likelihoods(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite feature vector")
        return np.stack([g.logpdf(X) for g in self.mixtures], axis=1)

    def predict(self, X) -> list:
        idx = np.argmax(self.log_likelihoods(X), axis=1)  # first max = alphabet order
        return [self.labels[i] for i in idx]

    def accuracy(self, samples) -> float:
        labels, X = _stack(samples)
        if not labels:
            return float("nan")
        pred = self.predict(X)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))

    def to_json(self) -> dict:
        return {
            "kind": "multigaussian",
            "version": MODEL_FORMAT_VERSION,
            "dim": self.dim,
            "classes": [
                {"label": lab, "weights": g.weights, "means": g.means, "covariances": g.covs}
                for lab, g in zip(self.labels, self.mixtures)
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "MultiGaussianModel":
        labels, mixtures = [], []
        for c in doc["classes"]:
            labels.append(c["label"])
            mixtures.append(FullGmm(np.array(c["weights"], float), np.array(c["means"], float),
                                    np.array(c["covariances"], float)))
        return cls(labels, mixtures, int(doc["dim"]))

    def save(self, path):
        write_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(read_model_json(path, "multigaussian"))


def train_multigaussian(samples: Sequence, n_components: int = 1,
                        order: Sequence[str] | None = None) -> MultiGaussianModel:
    """One full-covariance GMM per label, fitted by EM.

    ``order`` fixes class order (and therefore tie-breaks); labels absent from
    ``samples`` are ignored. Default order is sorted labels.
    """
    labels, X = _stack(samples)
    if X.ndim != 2 or len(labels) == 0:
        raise ValueError("no training samples")
    d = X.shape[1]
    var = X.var(axis=0)
    floor = COV_FLOOR_SCALE * np.where(var > 0, var, 1.0)
    present = set(labels)
    order = [lab for lab in (order if order is not None else sorted(present)) if lab in present]
    lab_arr = np.array(labels)
    mixtures = []
    for lab in order:
        Xc = X[lab_arr == lab]
        if len(Xc) < n_components * d:
            raise ValueError(f"class {lab!r} has {len(Xc)} samples, needs >= {n_components * d}")
        mixtures.append(fit_full_gmm(Xc, n_components, floor))
    return MultiGaussianModel(order, mixtures, d)


def classify_mg(model: MultiGaussianModel, x) -> str:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("classify_mg takes one feature vector")
    return model.predict(x[None])[0]


# ---------------------------------------------------------------------------
# feed-forward network


@dataclass
class MlpConfig:
    hidden: tuple = (4, 4)
    lr: float = 0.001
    batch_size: int | None = 32  # None: full batch
    dropout: float = 0.25
    patience: int = 10
    val_frac: float = 0.2
    max_epochs: int = 500
    rho: float = 0.9
    eps: float = 1e-7
    seed: int = 0


@dataclass
class MlpModel:
    classes: list
    weights: list  # W_l with shape (n_in, n_out)
    biases: list
    history: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def to_json(self) -> dict:
        return {"kind": "mlp", "version": MODEL_FORMAT_VERSION, "classes": self.classes,
                "weights": self.weights, "biases": self.biases}

    @classmethod
    def from_json(cls, doc) -> "MlpModel":
        return cls(list(doc["classes"]), [np.array(w, float) for w in doc["weights"]],
                   [np.array(b, float) for b in doc["biases"]])

    def save(self, path):
        write_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(read_model_json(path, "mlp"))


def _forward(weights, biases, X, masks=None):
    acts = [X]
    h = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        if i < len(weights) - 1:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
        else:
            h = z
        acts.append(h)
    return acts


def mlp_loss_and_grad(weights, biases, X, Y, masks=None):
    """Mean cross-entropy and its gradient; ``Y`` is one-hot."""
    acts = _forward(weights, biases, X, masks)
    logp = log_softmax(acts[-1], axis=1)
    n = X.shape[0]
    loss = -float((Y * logp).sum()) / n
    delta = (np.exp(logp) - Y) / n
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            delta = delta * (acts[i] > 0)
            if masks is not None:
                delta = delta * masks[i - 1]
    return loss, gW, gb


def init_mlp(sizes, rng):
    weights = [rng.normal(0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return weights, biases


def train_mlp(X, y, config: MlpConfig = MlpConfig()) -> MlpModel:
    """RMSprop on cross-entropy with dropout and early stopping on a held-out split."""
    X = np.asarray(X, dtype=float)
    classes = sorted(set(y))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    idx = {c: i for i, c in enumerate(classes)}
    Y = np.eye(len(classes))[[idx[c] for c in y]]
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(X))
    n_val = int(round(config.val_frac * len(X)))
    val, tr = perm[:n_val], perm[n_val:]
    Xt, Yt = X[tr], Y[tr]
    sizes = [X.shape[1], *config.hidden, len(classes)]
    weights, biases = init_mlp(sizes, rng)
    cache_w = [np.zeros_like(w) for w in weights]
    cache_b = [np.zeros_like(b) for b in biases]
    keep = 1.0 - config.dropout
    bs = config.batch_size or len(Xt)
    best = (np.inf, [w.copy() for w in weights], [b.copy() for b in biases])
    since_best = 0
    train_loss, val_loss = [], []
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(Xt)) if config.batch_size else np.arange(len(Xt))
        for start in range(0, len(Xt), bs):
            sel = order[start:start + bs]
            masks = None
            if config.dropout > 0:
                masks = [(rng.random((len(sel), h)) < keep) / keep for h in config.hidden]
            _, gW, gb = mlp_loss_and_grad(weights, biases, Xt[sel], Yt[sel], masks)
            for params, grads, caches in ((weights, gW, cache_w), (biases, gb, cache_b)):
                for p, g, c in zip(params, grads, caches):
                    c *= config.rho
                    c += (1 - config.rho) * g * g
                    p -= config.lr * g / (np.sqrt(c) + config.eps)
        train_loss.append(mlp_loss_and_grad(weights, biases, Xt, Yt)[0])
        if n_val:
            v = mlp_loss_and_grad(weights, biases, X[val], Y[val])[0]
        else:
            v = train_loss[-1]
        val_loss.append(v)
        if v < best[0]:
            best = (v, [w.copy() for w in weights], [b.copy() for b in biases])
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return MlpModel(classes, best[1], best[2],
                    {"train_loss": train_loss, "val_loss": val_loss, "epochs": len(train_loss)})


def mlp_posteriors(model: MlpModel, X) -> np.ndarray:
    """Softmax class posteriors; a single vector in gives a single vector out."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.sizes[0]:
        raise ValueError(f"expected dimension {model.sizes[0]}, got {X.shape[1]}")
    logits = _forward(model.weights, model.biases, X)[-1]
    p = np.exp(log_softmax(logits, axis=1))
    return p[0] if single else p


def posterior_stream(model: MlpModel, stream: FrameStream) -> FrameStream:
    """Replace each frame by its class-posterior vector."""
    return stream.with_frames(mlp_posteriors(model, stream.frames))
