"""Bag-of-words + multinomial logistic regression baseline.

Features are raw counts of the top-N training tokens (N=1800 by default),
ranked by frequency with ties broken by first appearance in the training
stream.  Counts are taken over the full, untruncated representation token
sequence.  The classifier is a hand-rolled softmax regression trained with
deterministic mini-batch gradient descent (cross-entropy + L2 on weights,
biases unpenalized).
"""

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .evaluation import Prediction

logger = logging.getLogger(__name__)

DEFAULT_VOCAB_SIZE = 1800


class BowVocabulary:
    """Token -> feature index for the top-N training tokens."""

    def __init__(self, tokens):
        self._tokens = list(tokens)
        self._index = {}
        for i, token in enumerate(self._tokens):
            if token in self._index:
                raise ValueError(f"duplicate bag-of-words token: {token!r}")
            self._index[token] = i

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    def index_of(self, token):
        return self._index.get(token, -1)

    def tokens(self):
        return list(self._tokens)

    @classmethod
    def build(cls, token_streams, size=DEFAULT_VOCAB_SIZE):
        """Top `size` tokens by count; ties broken by first-seen order."""
        if size < 1:
            raise ValueError(f"size must be >= 1, got {size}")
        counts = Counter()
        first_seen = {}
        for stream in token_streams:
            for token in stream:
                counts[token] += 1
                if token not in first_seen:
                    first_seen[token] = len(first_seen)
        if not counts:
            raise ValueError("empty corpus: no tokens for the bag-of-words vocabulary")
        ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        return cls(ranked[:size])


def bow_features(tokens, vocab):
    """Sparse count features: {feature index: count} over the full sequence."""
    out = {}
    for token in tokens:
        idx = vocab.index_of(token)
        if idx >= 0:
            out[idx] = out.get(idx, 0) + 1
    return out


def features_matrix(feature_dicts, n_features):
    """Densify a list of sparse feature dicts to (N, n_features) float64."""
    X = np.zeros((len(feature_dicts), n_features))
    for row, feats in enumerate(feature_dicts):
        for idx, count in feats.items():
            if not 0 <= idx < n_features:
                raise ValueError(f"feature index {idx} outside 0..{n_features - 1}")
            X[row, idx] = count
    return X


@dataclass
class LinearModel:
    weights: np.ndarray  # (n_features, n_categories)
    bias: np.ndarray  # (n_categories,)
    epoch_losses: list  # objective recorded at the start of each epoch


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def _objective(X, onehot, W, b, l2_lambda):
    probs = _softmax(X @ W + b)
    picked = np.clip((probs * onehot).sum(axis=1), 1e-300, None)
    return float(-np.mean(np.log(picked)) + 0.5 * l2_lambda * np.sum(W * W))


def train_logreg(features, labels, num_categories, l2_lambda=1e-4, lr=0.1,
                 epochs=50, batch_size=128, seed=0):
    """Softmax regression via deterministic mini-batch gradient descent.

    features: list of sparse feature dicts or a dense (N, F) matrix.
    labels: category indices in [0, num_categories).  The recorded
    epoch_losses[k] is the full objective at the start of epoch k, so with
    batch_size >= N (full batch) the sequence is the classic descent curve.
    """
    if num_categories < 2:
        raise ValueError(f"need >= 2 categories, got {num_categories}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("no training examples")
    if len(set(labels.tolist())) < 2:
        raise ValueError("training labels cover a single category; nothing to separate")
    if labels.min() < 0 or labels.max() >= num_categories:
        raise ValueError("label outside 0..num_categories-1")
    if isinstance(features, np.ndarray):
        X = np.asarray(features, dtype=np.float64)
    else:
        n_features = 1 + max((max(f) for f in features if f), default=-1)
        X = features_matrix(features, n_features)
    if X.shape[0] != labels.size:
        raise ValueError(f"{X.shape[0]} feature rows vs {labels.size} labels")

    n, n_features = X.shape
    onehot = np.zeros((n, num_categories))
    onehot[np.arange(n), labels] = 1.0
    W = np.zeros((n_features, num_categories))
    b = np.zeros(num_categories)
    rng = np.random.default_rng(seed)
    epoch_losses = []
    for epoch in range(epochs):
        epoch_losses.append(_objective(X, onehot, W, b, l2_lambda))
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            Xb, Yb = X[sel], onehot[sel]
            probs = _softmax(Xb @ W + b)
            dlogits = (probs - Yb) / len(sel)
            gW = Xb.T @ dlogits + l2_lambda * W
            gb = dlogits.sum(axis=0)
            W -= lr * gW
            b -= lr * gb
        if not np.isfinite(W).all() or not np.isfinite(b).all():
            raise FloatingPointError(
                f"logistic regression diverged at epoch {epoch + 1}"
            )
    logger.info("logreg: %d examples, %d features, final objective %.6f",
                n, n_features, _objective(X, onehot, W, b, l2_lambda))
    return LinearModel(weights=W, bias=b, epoch_losses=epoch_losses)


def predict_logreg(model, features):
    """Prediction for one sparse feature dict or dense vector."""
    n_features = model.weights.shape[0]
    if isinstance(features, dict):
        x = np.zeros(n_features)
        for idx, count in features.items():
            if not 0 <= idx < n_features:
                raise ValueError(f"feature index {idx} outside 0..{n_features - 1}")
            x[idx] = count
    else:
        x = np.asarray(features, dtype=np.float64)
        if x.shape != (n_features,):
            raise ValueError(f"feature vector shape {x.shape}, expected ({n_features},)")
    logits = (x @ model.weights + model.bias)[None, :]
    return Prediction(_softmax(logits)[0])


def save_baseline(path, model, bow_vocab, categories, extra_meta=None):
    from . import checkpoint

    meta = {
        "kind": "lr",
        "categories": list(categories),
        "bow_tokens": bow_vocab.tokens(),
    }
    meta.update(extra_meta or {})
    arrays = {"weights": model.weights, "bias": model.bias}
    checkpoint.save_checkpoint(path, meta, arrays)


def load_baseline(path):
    """Returns (model, bow_vocab, categories, meta)."""
    from . import checkpoint

    meta, arrays = checkpoint.load_checkpoint(path)
    if meta.get("kind") != "lr":
        raise ValueError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected 'lr'")
    model = LinearModel(weights=arrays["weights"], bias=arrays["bias"], epoch_losses=[])
    vocab = BowVocabulary(meta["bow_tokens"])
    return model, vocab, meta["categories"], meta
