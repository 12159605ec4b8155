"""Function-level classifier: frozen embedding -> conv -> maxpool -> LSTM
-> dense -> softmax, trained with Adamax.  Everything float64 numpy.

Architecture at defaults (seq_len 60, kernel 3, stride 1, pool 2):

    ids (60,) -> embed lookup (60, 100)          [frozen, never trained]
             -> valid conv, 250 filters, ReLU    (58, 250)
             -> non-overlapping max pool 2       (29, 250)
             -> LSTM 100 units, final hidden     (100,)
             -> dense 512, ReLU, dropout 0.5     (512,)
             -> dense softmax                    (|categories|,)

Weights use Glorot-uniform init (limit sqrt(6 / (fan_in + fan_out));
conv fans are kernel*embed_dims and filters; LSTM per-gate fans are
(input_size, units)).  Biases start at zero except the LSTM forget gate,
which starts at one.  Gate order in the stacked LSTM matrices is i, f, g, o.

Training picks the best of `epochs` per-epoch snapshots by function-level
accuracy on a withheld-project validation slice.  Dropout is inverted
(scaling at train time), so inference needs no rescaling.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .evaluation import Prediction

logger = logging.getLogger(__name__)

PARAM_NAMES = (
    "conv_w", "conv_b",
    "lstm_wx", "lstm_wh", "lstm_b",
    "hid_w", "hid_b",
    "out_w", "out_b",
)


@dataclass
class ClassifierConfig:
    num_categories: int
    seq_len: int = 60
    embed_dims: int = 100
    filters: int = 250
    kernel_size: int = 3
    strides: int = 1
    pool_size: int = 2
    lstm_units: int = 100
    hide_u: int = 512
    dropout_level: float = 0.5
    epochs: int = 3
    batch_size: int = 128
    optimizer: str = "adamax"
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    validation_fraction: float = 0.05
    seed: int = 0

    @property
    def conv_len(self):
        return (self.seq_len - self.kernel_size) // self.strides + 1

    @property
    def pooled_len(self):
        return self.conv_len // self.pool_size

    def validate(self):
        if self.num_categories < 2:
            raise ValueError(f"need >= 2 categories, got {self.num_categories}")
        for name in ("seq_len", "embed_dims", "filters", "kernel_size", "strides",
                     "pool_size", "lstm_units", "hide_u", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kernel_size > self.seq_len:
            raise ValueError("kernel_size cannot exceed seq_len")
        if self.pooled_len < 1:
            raise ValueError("pool_size too large: pooled sequence would be empty")
        if not 0.0 <= self.dropout_level < 1.0:
            raise ValueError(f"dropout_level must be in [0, 1), got {self.dropout_level}")
        if self.optimizer != "adamax":
            raise ValueError(f"unsupported optimizer: {self.optimizer!r}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        return self


class ClassifierModel:
    """Parameters + frozen embedding + Adamax state."""

    def __init__(self, config, embedding, params, history=None):
        self.config = config
        self.embedding = embedding
        self.params = params
        self.opt_m = {k: np.zeros_like(v) for k, v in params.items()}
        self.opt_u = {k: np.zeros_like(v) for k, v in params.items()}
        self.opt_t = 0
        self.history = history or {}

    def snapshot_params(self):
        return {k: v.copy() for k, v in self.params.items()}


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(config, embedding, seed=None):
    """Fresh model; draw order: conv_w, lstm_wx, lstm_wh, hid_w, out_w."""
    config.validate()
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.ndim != 2 or embedding.shape[1] != config.embed_dims:
        raise ValueError(
            f"embedding shape {embedding.shape} incompatible with "
            f"embed_dims {config.embed_dims}"
        )
    if embedding.shape[0] < 2:
        raise ValueError("embedding needs at least the padding and unknown rows")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    K, D, F = config.kernel_size, config.embed_dims, config.filters
    U, H, C = config.lstm_units, config.hide_u, config.num_categories
    params = {
        "conv_w": _glorot(rng, (K, D, F), K * D, F),
        "conv_b": np.zeros(F),
        "lstm_wx": _glorot(rng, (F, 4 * U), F, U),
        "lstm_wh": _glorot(rng, (U, 4 * U), U, U),
        "lstm_b": np.zeros(4 * U),
        "hid_w": _glorot(rng, (U, H), U, H),
        "hid_b": np.zeros(H),
        "out_w": _glorot(rng, (H, C), H, C),
        "out_b": np.zeros(C),
    }
    params["lstm_b"][U : 2 * U] = 1.0  # forget-gate bias
    return ClassifierModel(config, embedding, params)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def _forward(model, ids, training=False, rng=None, want_cache=False):
    """Batched forward pass; ids is (B, seq_len) int.

    Returns (probs, cache); cache is None unless want_cache or training.
    """
    cfg = model.config
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[1] != cfg.seq_len:
        raise ValueError(f"ids must be (batch, {cfg.seq_len}), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= model.embedding.shape[0]:
        raise ValueError("token id outside embedding table")
    p = model.params
    B = ids.shape[0]
    K, F, U = cfg.kernel_size, cfg.filters, cfg.lstm_units
    T, T2, PS = cfg.conv_len, cfg.pooled_len, cfg.pool_size

    X = model.embedding[ids]  # (B, L, D)
    win = sliding_window_view(X, K, axis=1)[:, ::cfg.strides]  # (B, T, D, K)
    win_flat = win.transpose(0, 1, 3, 2).reshape(B * T, K * cfg.embed_dims)
    Z = (win_flat @ p["conv_w"].reshape(K * cfg.embed_dims, F)).reshape(B, T, F)
    Z += p["conv_b"]
    A = np.maximum(Z, 0.0)

    usable = A[:, : T2 * PS, :].reshape(B, T2, PS, F)
    pool_idx = usable.argmax(axis=2)  # first max wins ties
    P = np.take_along_axis(usable, pool_idx[:, :, None, :], axis=2)[:, :, 0, :]

    h = np.zeros((B, U))
    c = np.zeros((B, U))
    steps = []
    for t in range(T2):
        z = P[:, t, :] @ p["lstm_wx"] + h @ p["lstm_wh"] + p["lstm_b"]
        gi = _sigmoid(z[:, :U])
        gf = _sigmoid(z[:, U : 2 * U])
        gg = np.tanh(z[:, 2 * U : 3 * U])
        go = _sigmoid(z[:, 3 * U :])
        c_prev, h_prev = c, h
        c = gf * c_prev + gi * gg
        tc = np.tanh(c)
        h = go * tc
        if want_cache:
            steps.append((gi, gf, gg, go, c_prev, h_prev, tc))

    hid_pre = h @ p["hid_w"] + p["hid_b"]
    Hact = np.maximum(hid_pre, 0.0)
    mask = None
    if training and cfg.dropout_level > 0.0:
        if rng is None:
            raise ValueError("training with dropout requires an rng")
        keep = 1.0 - cfg.dropout_level
        mask = (rng.random(Hact.shape) < keep) / keep
        Hd = Hact * mask
    else:
        Hd = Hact
    logits = Hd @ p["out_w"] + p["out_b"]
    probs = _softmax(logits)

    cache = None
    if want_cache:
        cache = {
            "win_flat": win_flat, "Z": Z, "A": A, "pool_idx": pool_idx, "P": P,
            "steps": steps, "h_last": h, "hid_pre": hid_pre, "Hact": Hact,
            "mask": mask, "Hd": Hd, "probs": probs,
        }
    return probs, cache


def _backward(model, cache, onehot):
    """Gradients of mean cross-entropy w.r.t. all trainable parameters."""
    cfg = model.config
    p = model.params
    B = onehot.shape[0]
    K, F, U = cfg.kernel_size, cfg.filters, cfg.lstm_units
    T, T2, PS = cfg.conv_len, cfg.pooled_len, cfg.pool_size

    dlogits = (cache["probs"] - onehot) / B
    grads = {}
    grads["out_w"] = cache["Hd"].T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    dHd = dlogits @ p["out_w"].T
    dH = dHd * cache["mask"] if cache["mask"] is not None else dHd
    dhid_pre = dH * (cache["hid_pre"] > 0.0)
    grads["hid_w"] = cache["h_last"].T @ dhid_pre
    grads["hid_b"] = dhid_pre.sum(axis=0)

    dh = dhid_pre @ p["hid_w"].T
    dc = np.zeros_like(dh)
    g_wx = np.zeros_like(p["lstm_wx"])
    g_wh = np.zeros_like(p["lstm_wh"])
    g_b = np.zeros_like(p["lstm_b"])
    dP = np.zeros((B, T2, F))
    for t in range(T2 - 1, -1, -1):
        gi, gf, gg, go, c_prev, h_prev, tc = cache["steps"][t]
        do = dh * tc
        dc = dc + dh * go * (1.0 - tc * tc)
        di = dc * gg
        df = dc * c_prev
        dg = dc * gi
        dz = np.concatenate(
            (
                di * gi * (1.0 - gi),
                df * gf * (1.0 - gf),
                dg * (1.0 - gg * gg),
                do * go * (1.0 - go),
            ),
            axis=1,
        )
        g_wx += cache["P"][:, t, :].T @ dz
        g_wh += h_prev.T @ dz
        g_b += dz.sum(axis=0)
        dP[:, t, :] = dz @ p["lstm_wx"].T
        dh = dz @ p["lstm_wh"].T
        dc = dc * gf
    grads["lstm_wx"] = g_wx
    grads["lstm_wh"] = g_wh
    grads["lstm_b"] = g_b

    dU = np.zeros((B, T2, PS, F))
    np.put_along_axis(dU, cache["pool_idx"][:, :, None, :], dP[:, :, None, :], axis=2)
    dA = np.zeros((B, T, F))
    dA[:, : T2 * PS, :] = dU.reshape(B, T2 * PS, F)
    dZ = dA * (cache["Z"] > 0.0)
    dZ_flat = dZ.reshape(B * T, F)
    grads["conv_w"] = (cache["win_flat"].T @ dZ_flat).reshape(K, cfg.embed_dims, F)
    grads["conv_b"] = dZ_flat.sum(axis=0)
    return grads


def cross_entropy(probs, onehot, floor=1e-300):
    """Mean negative log-likelihood of the gold categories."""
    picked = np.clip((probs * onehot).sum(axis=1), floor, None)
    return float(-np.mean(np.log(picked)))


def adamax_update(model, grads):
    """One Adamax step: m = b1 m + (1-b1) g;  u = max(b2 u, |g|);
    param -= lr * (m / (1 - b1^t)) / (u + eps)."""
    cfg = model.config
    model.opt_t += 1
    correction = 1.0 - cfg.beta1 ** model.opt_t
    for name, grad in grads.items():
        m = model.opt_m[name]
        u = model.opt_u[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        np.maximum(cfg.beta2 * u, np.abs(grad), out=u)
        model.params[name] -= cfg.learning_rate * (m / correction) / (u + cfg.epsilon)


def train_step(model, ids, onehot, rng=None):
    """Forward + backward + Adamax on one minibatch; returns the batch loss."""
    probs, cache = _forward(model, ids, training=True, rng=rng, want_cache=True)
    loss = cross_entropy(probs, onehot)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss: {loss}")
    grads = _backward(model, cache, onehot)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    adamax_update(model, grads)
    return loss


def predict_proba(model, ids, batch_size=512):
    """Probabilities for (N, seq_len) ids, batched; returns (N, C)."""
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    out = np.empty((ids.shape[0], model.config.num_categories))
    for lo in range(0, ids.shape[0], batch_size):
        probs, _ = _forward(model, ids[lo : lo + batch_size], training=False)
        out[lo : lo + probs.shape[0]] = probs
    return out


def forward(model, ids):
    """Single-sequence Prediction."""
    return Prediction(predict_proba(model, np.asarray(ids)[None, :])[0])


def conv_activations(model, ids):
    """Post-ReLU convolution activations for one sequence: (conv_len, filters)."""
    cfg = model.config
    _, cache = _forward(model, np.asarray(ids)[None, :], want_cache=True)
    return cache["A"][0].copy()


@dataclass
class TrainExample:
    """One training instance: a represented function with its category index."""

    project: str
    ids: np.ndarray
    label: int


def pick_best_epoch(accuracies):
    """Index of the highest validation accuracy; first wins ties."""
    if not accuracies:
        raise ValueError("no epochs recorded")
    return int(np.argmax(accuracies))


def fit(model, examples):
    """Train for config.epochs epochs; return the best snapshot as a new model.

    A fraction of training *projects* (validation_fraction, at least one
    project) is withheld; after each epoch the parameters are snapshotted and
    scored by function-level accuracy on the withheld slice.  The snapshot
    with the highest validation accuracy wins (earliest epoch on ties).  The
    embedding is frozen throughout.  The returned model carries a `history`
    dict with per-epoch losses and validation accuracies.
    """
    cfg = model.config
    if not examples:
        raise ValueError("no training examples")
    labels = sorted({ex.label for ex in examples})
    if labels != list(range(cfg.num_categories)):
        raise ValueError(
            f"training examples must cover all {cfg.num_categories} categories; "
            f"saw labels {labels}"
        )
    rng = np.random.default_rng(cfg.seed)
    projects = sorted({ex.project for ex in examples})
    n_val = max(1, round(cfg.validation_fraction * len(projects)))
    if n_val >= len(projects):
        raise ValueError(
            f"validation would swallow all {len(projects)} training projects"
        )
    order = rng.permutation(len(projects))
    val_projects = {projects[int(i)] for i in order[:n_val]}
    train_ex = [ex for ex in examples if ex.project not in val_projects]
    val_ex = [ex for ex in examples if ex.project in val_projects]
    missing = set(range(cfg.num_categories)) - {ex.label for ex in train_ex}
    if missing:
        raise ValueError(
            f"category indices {sorted(missing)} vanished from the training "
            f"portion after withholding validation projects {sorted(val_projects)}"
        )
    logger.info(
        "fit: %d train / %d validation examples (%d/%d projects withheld)",
        len(train_ex), len(val_ex), n_val, len(projects),
    )

    X = np.stack([ex.ids for ex in train_ex]).astype(np.int64)
    Y = np.zeros((len(train_ex), cfg.num_categories))
    Y[np.arange(len(train_ex)), [ex.label for ex in train_ex]] = 1.0
    Xv = np.stack([ex.ids for ex in val_ex]).astype(np.int64)
    yv = np.array([ex.label for ex in val_ex])

    snapshots = []
    val_accuracies = []
    epoch_losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_ex))
        losses = []
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo : lo + cfg.batch_size]
            losses.append(train_step(model, X[sel], Y[sel], rng=rng))
        probs = predict_proba(model, Xv)
        acc = float(np.mean(probs.argmax(axis=1) == yv))
        snapshots.append(model.snapshot_params())
        val_accuracies.append(acc)
        epoch_losses.append(float(np.mean(losses)))
        logger.info("epoch %d/%d: train loss %.4f, val accuracy %.4f",
                    epoch + 1, cfg.epochs, epoch_losses[-1], acc)

    best = pick_best_epoch(val_accuracies)
    history = {
        "val_accuracy": val_accuracies,
        "train_loss": epoch_losses,
        "best_epoch": best,
        "val_projects": sorted(val_projects),
    }
    return ClassifierModel(cfg, model.embedding, snapshots[best], history=history)


def gradient_check(config, seed=0, h=1e-5):
    """Max elementwise relative error between analytic and central-difference
    gradients on a tiny random model/sample.  Requires dropout disabled."""
    config.validate()
    if config.dropout_level != 0.0:
        raise ValueError("gradient check requires dropout_level == 0")
    rng = np.random.default_rng(seed)
    vocab_size = 12
    emb = rng.normal(size=(vocab_size, config.embed_dims))
    emb[:2] = 0.0
    model = init_model(config, emb, seed=seed + 1)
    ids = rng.integers(2, vocab_size, size=(1, config.seq_len))
    onehot = np.zeros((1, config.num_categories))
    onehot[0, int(rng.integers(config.num_categories))] = 1.0

    probs, cache = _forward(model, ids, want_cache=True)
    analytic = _backward(model, cache, onehot)

    def loss_now():
        probs, _ = _forward(model, ids)
        return cross_entropy(probs, onehot)

    worst = 0.0
    for name in PARAM_NAMES:
        param = model.params[name]
        flat = param.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_now()
            flat[idx] = orig - h
            down = loss_now()
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            ga = analytic[name].reshape(-1)[idx]
            denom = max(abs(ga), abs(fd), 1e-8)
            worst = max(worst, abs(ga - fd) / denom)
    return worst


def model_meta(model, extra=None):
    """Checkpoint header fields for this model."""
    meta = {"kind": "nn", "config": asdict(model.config), "seed": model.config.seed}
    meta.update(extra or {})
    return meta


def save_model(path, model, vocab, categories, extra_meta=None):
    from . import checkpoint

    meta = model_meta(model, extra_meta)
    meta["categories"] = list(categories)
    meta["vocab_tokens"] = vocab.tokens()
    meta["vocab_sha256"] = vocab.sha256()
    meta["history"] = model.history
    arrays = {"embedding": model.embedding}
    arrays.update(model.params)
    checkpoint.save_checkpoint(path, meta, arrays)


def load_model(path):
    """Returns (model, vocab, categories, meta)."""
    from . import checkpoint
    from .tokens import Vocabulary

    meta, arrays = checkpoint.load_checkpoint(path)
    if meta.get("kind") != "nn":
        raise ValueError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected 'nn'")
    config = ClassifierConfig(**meta["config"])
    vocab = Vocabulary(meta["vocab_tokens"])
    if vocab.sha256() != meta.get("vocab_sha256"):
        raise ValueError(f"{path}: vocabulary hash mismatch; checkpoint corrupt")
    embedding = arrays.pop("embedding")
    model = ClassifierModel(config, embedding, arrays, history=meta.get("history"))
    return model, vocab, meta["categories"], meta
