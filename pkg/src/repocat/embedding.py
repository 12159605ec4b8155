"""Word embeddings trained on function token sequences.

Co-occurrence counting uses an asymmetric left-context window: for each
position t and offset j in [1, window], the pair (token[t], token[t-j])
accumulates weight 1/j.  Windows never cross sentence boundaries.  One
sentence per function: the code-only strategy uses the function's co
representation; code-description prepends the tokenized project description
(no delimiter token in embedding sentences).

Training minimizes the weighted least-squares objective

    sum_ij f(X_ij) (w_i . w~_j + b_i + b~_j - log X_ij)^2,
    f(x) = (x / x_max)^alpha for x < x_max, else 1

with AdaGrad (per-parameter squared-gradient accumulators initialized to 1).
The published vector for each token is w + w~; rows 0 (padding) and
1 (unknown) stay exactly zero and never train.

For speed the nonzero entries are processed in seeded-shuffled chunks with
scatter-add updates; gradients within a chunk are taken at chunk-start
parameters rather than strictly sequentially.  Deterministic for a fixed
seed.
"""

import logging
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import fileio
from .tokens import PAD_ID, UNK_ID

logger = logging.getLogger(__name__)

STRATEGIES = ("code-only", "code-description")


@dataclass
class GloveConfig:
    window: int = 200
    dims: int = 100
    x_max: float = 100.0
    alpha: float = 0.75
    learning_rate: float = 0.05
    iterations: int = 25
    seed: int = 0
    distance_weighting: bool = True

    def validate(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.x_max <= 0:
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        return self


def embedding_sentences(records, strategy):
    """Token sentences for embedding training, one per function record.

    records carry .tokens (the co representation) and .descr_tokens (possibly
    empty); dict records with the same keys are accepted too.
    code-description prepends the description tokens; functions without a
    description emit their code-only sentence under either strategy.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown embedding strategy: {strategy!r}")
    sentences = []
    for rec in records:
        if isinstance(rec, dict):
            co, descr = rec["tokens"], rec.get("descr_tokens") or []
        else:
            co, descr = rec.tokens, getattr(rec, "descr_tokens", []) or []
        if strategy == "code-description" and descr:
            sentences.append(list(descr) + list(co))
        else:
            sentences.append(list(co))
    return sentences


class CooccurrenceTable:
    """Sparse (target id, left-context id) -> weighted count."""

    def __init__(self, counts=None):
        self.counts = dict(counts or {})

    def __len__(self):
        return len(self.counts)

    def __getitem__(self, pair):
        return self.counts.get(pair, 0.0)

    def items(self):
        return self.counts.items()

    def mass(self):
        return sum(self.counts.values())

    def to_arrays(self):
        """Sorted (targets, contexts, counts) arrays for training/serialization."""
        if not self.counts:
            return (
                np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.float64),
            )
        keys = sorted(self.counts)
        ii = np.array([k[0] for k in keys], dtype=np.int64)
        jj = np.array([k[1] for k in keys], dtype=np.int64)
        xx = np.array([self.counts[k] for k in keys], dtype=np.float64)
        return ii, jj, xx

    def save(self, path):
        """Binary cache: repeated (uint32 target, uint32 context, float64 count) LE."""
        ii, jj, xx = self.to_arrays()
        out = bytearray()
        for i, j, x in zip(ii, jj, xx):
            out += struct.pack("<IId", int(i), int(j), float(x))
        fileio.atomic_write_bytes(path, bytes(out))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        record = struct.calcsize("<IId")
        if len(raw) % record:
            raise ValueError(f"{path}: truncated co-occurrence cache")
        counts = {}
        for off in range(0, len(raw), record):
            i, j, x = struct.unpack_from("<IId", raw, off)
            counts[(i, j)] = x
        return cls(counts)


def build_cooccurrence(sentences, config):
    """Count left-context co-occurrences over id-encoded sentences."""
    config.validate()
    window = config.window
    weighted = config.distance_weighting
    counts = {}
    for sentence in sentences:
        n = len(sentence)
        for t in range(n):
            target = int(sentence[t])
            jmax = min(window, t)
            for j in range(1, jmax + 1):
                key = (target, int(sentence[t - j]))
                add = 1.0 / j if weighted else 1.0
                if key in counts:
                    counts[key] += add
                else:
                    counts[key] = add
    return CooccurrenceTable(counts)


def train_glove(table, vocab_size, config, chunk=16384):
    """Train vectors on a co-occurrence table.

    Returns (matrix, losses): matrix is (vocab_size, dims) float64 of
    published vectors w + w~ with rows 0/1 zero; losses[0] is the mean loss
    at initialization, then one running mean loss per iteration.  With
    iterations=0 the seeded random initialization is published unchanged.
    """
    config.validate()
    ii, jj, xx = table.to_arrays()
    keep = (ii >= 2) & (jj >= 2) & (ii < vocab_size) & (jj < vocab_size)
    if not np.all(keep):
        ii, jj, xx = ii[keep], jj[keep], xx[keep]
    n_entries = len(xx)
    dims = config.dims
    rng = np.random.default_rng(config.seed)

    def init(shape):
        return (rng.random(shape) - 0.5) / (dims + 1)

    w = init((vocab_size, dims))
    wt = init((vocab_size, dims))
    b = init(vocab_size)
    bt = init(vocab_size)
    for arr in (w, wt, b, bt):
        arr[:2] = 0.0
    grad_w = np.ones_like(w)
    grad_wt = np.ones_like(wt)
    grad_b = np.ones_like(b)
    grad_bt = np.ones_like(bt)

    if n_entries == 0:
        published = w + wt
        published[:2] = 0.0
        return published, [0.0]

    logx = np.log(xx)
    fx = np.minimum((xx / config.x_max) ** config.alpha, 1.0)
    lr = config.learning_rate

    def mean_loss():
        diff = np.einsum("nd,nd->n", w[ii], wt[jj]) + b[ii] + bt[jj] - logx
        return float(np.mean(0.5 * fx * diff * diff))

    losses = [mean_loss()]
    for iteration in range(config.iterations):
        order = rng.permutation(n_entries)
        total = 0.0
        for lo in range(0, n_entries, chunk):
            sel = order[lo : lo + chunk]
            i_s, j_s = ii[sel], jj[sel]
            wi, wj = w[i_s], wt[j_s]
            diff = np.einsum("nd,nd->n", wi, wj) + b[i_s] + bt[j_s] - logx[sel]
            fdiff = fx[sel] * diff
            total += float(0.5 * fdiff @ diff)
            gw = fdiff[:, None] * wj
            gwt = fdiff[:, None] * wi
            np.add.at(w, i_s, -lr * gw / np.sqrt(grad_w[i_s]))
            np.add.at(wt, j_s, -lr * gwt / np.sqrt(grad_wt[j_s]))
            np.add.at(b, i_s, -lr * fdiff / np.sqrt(grad_b[i_s]))
            np.add.at(bt, j_s, -lr * fdiff / np.sqrt(grad_bt[j_s]))
            np.add.at(grad_w, i_s, gw * gw)
            np.add.at(grad_wt, j_s, gwt * gwt)
            np.add.at(grad_b, i_s, fdiff * fdiff)
            np.add.at(grad_bt, j_s, fdiff * fdiff)
        iteration_loss = total / n_entries
        if not np.isfinite(iteration_loss):
            raise FloatingPointError(
                f"embedding training diverged at iteration {iteration + 1}: "
                f"loss {iteration_loss}"
            )
        losses.append(iteration_loss)
        logger.info("glove iteration %d/%d loss %.6f",
                    iteration + 1, config.iterations, iteration_loss)

    published = w + wt
    published[:2] = 0.0
    return published, losses


def nearest_neighbors(matrix, vocab, token, k=10):
    """k nearest tokens by cosine similarity; ties broken by lowest id.

    Padding, unknown, the query itself, and zero-vector tokens are excluded.
    Raises KeyError for out-of-vocabulary queries and ValueError for
    zero-vector queries (cosine undefined).
    """
    if token not in vocab:
        raise KeyError(f"token not in vocabulary: {token!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_id = vocab.id_of(token)
    query = matrix[query_id]
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        raise ValueError(f"token {token!r} has a zero vector; cosine undefined")
    norms = np.linalg.norm(matrix, axis=1)
    eligible = np.flatnonzero(norms > 0.0)
    eligible = eligible[(eligible >= 2) & (eligible != query_id)]
    if len(eligible) == 0:
        return []
    sims = (matrix[eligible] @ query) / (norms[eligible] * qnorm)
    order = np.lexsort((eligible, -sims))[: min(k, len(eligible))]
    return [(vocab.token_of(int(eligible[o])), float(sims[o])) for o in order]


def save_embedding_text(path, matrix, vocab, meta=None):
    """Text artifact: '# key=value' provenance lines then 'token v1 .. vD'
    rows for ids 2.. in id order (so the file carries the vocabulary)."""
    if matrix.shape[0] != len(vocab):
        raise ValueError(
            f"matrix has {matrix.shape[0]} rows but vocabulary needs {len(vocab)}"
        )
    lines = fileio.comment_header(meta or {})
    for offset, token in enumerate(vocab.tokens()):
        row = matrix[2 + offset]
        lines.append(token + " " + " ".join(repr(float(v)) for v in row))
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def load_embedding_text(path, vocab, dims=None):
    """Load 'token v1 .. vD' rows aligned to vocab.

    Tokens outside the vocabulary are ignored; vocabulary tokens missing from
    the file keep zero vectors, as do padding/unknown.  Inconsistent column
    counts or duplicate tokens raise ValueError with the line number.
    """
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split(" ")
            token, values = parts[0], parts[1:]
            if dims is None:
                dims = len(values)
                if dims == 0:
                    raise ValueError(f"{path}: line {lineno}: no vector values")
            if len(values) != dims:
                raise ValueError(
                    f"{path}: line {lineno}: expected {dims} values, got {len(values)}"
                )
            if token in rows:
                raise ValueError(f"{path}: line {lineno}: duplicate token {token!r}")
            try:
                rows[token] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad float: {exc}") from exc
    if dims is None:
        raise ValueError(f"{path}: no embedding rows found")
    matrix = np.zeros((len(vocab), dims), dtype=np.float64)
    for token, vector in rows.items():
        if token in vocab:
            matrix[vocab.id_of(token)] = vector
    matrix[PAD_ID] = 0.0
    matrix[UNK_ID] = 0.0
    return matrix


def vocab_from_embedding_text(path):
    """Recover the id-ordered token list from an embedding artifact."""
    from .tokens import Vocabulary

    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            tokens.append(line.split(" ", 1)[0])
    if not tokens:
        raise ValueError(f"{path}: no embedding rows found")
    return Vocabulary(tokens)


def random_embedding(vocab_size, dims=100, seed=0, scale=0.5):
    """Seeded uniform(-scale, scale) matrix with zero pad/unknown rows."""
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-scale, scale, size=(vocab_size, dims))
    matrix[:2] = 0.0
    return matrix


def glove_config_meta(config):
    """Flat provenance dict for artifact headers."""
    return {f"glove.{k}": v for k, v in asdict(config).items()}
