"""Context-prediction query embedder (distributed-memory paragraph vectors).

Each training query owns a document vector that joins its context windows as
an extra input: the hidden state is the mean of the window's token vectors
and the document vector, scored against output token vectors under a
negative-sampling objective. Unseen queries are embedded by freezing both
token matrices and fitting a fresh document vector with the same loss.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import kernels
from .container import ModelArtifact, load_model, save_model
from .errors import ConfigError, TrainingDiverged
from .tokenizer import (
    UNK_ID,
    TokenizerOptions,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    encode,
    tokenize,
)
from .workload import WorkloadLog

KIND = "doc2vec"
NOISE_POWER = 0.75


@dataclass(frozen=True)
class Doc2VecConfig:
    dim: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 20
    alpha: float = 0.025
    alpha_min: float = 0.0001
    infer_steps: int = 50
    seed: int = 1

    def __post_init__(self):
        if min(self.dim, self.window, self.negatives, self.epochs, self.infer_steps) < 1:
            raise ConfigError("dim, window, negatives, epochs, infer_steps must be >= 1")
        if not (self.alpha > self.alpha_min > 0):
            raise ConfigError("need alpha > alpha_min > 0")

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "window": self.window,
            "negatives": self.negatives,
            "epochs": self.epochs,
            "alpha": self.alpha,
            "alpha_min": self.alpha_min,
            "infer_steps": self.infer_steps,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "Doc2VecConfig":
        return cls(**doc)


def context_windows(ids, window: int) -> list[tuple[np.ndarray, int]]:
    """One (context ids, target id) pair per position.

    The context is every id within ``window`` of the target, excluding the
    target itself; positions near the edges use the shorter available
    context, and a length-1 sequence yields a single empty-context pair.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ids = np.asarray(ids, dtype=np.int64)
    pairs = []
    for t in range(ids.shape[0]):
        lo = max(0, t - window)
        ctx = np.concatenate((ids[lo:t], ids[t + 1 : t + 1 + window]))
        pairs.append((ctx, int(ids[t])))
    return pairs


def window_loss_and_grads(token_in, token_out, dvec, ctx, target: int, negatives):
    """Loss and analytic gradients for a single context window.

    This is the reference math behind the training kernels: one SGD step
    applies exactly these gradients scaled by the window's learning rate.
    Negative draws equal to the target are skipped.
    """
    from scipy.special import expit, log_expit

    ctx = np.asarray(ctx, dtype=np.int64)
    n_in = ctx.shape[0] + 1
    h = (token_in[ctx].sum(axis=0) + dvec) / n_in
    negs = np.asarray(negatives, dtype=np.int64)
    wids = np.concatenate(([target], negs[negs != target]))
    u = token_out[wids] @ h
    loss = -(log_expit(u[0]) + log_expit(-u[1:]).sum())
    gsig = expit(u)
    gsig[0] -= 1.0
    d_token_out = np.zeros_like(token_out)
    np.add.at(d_token_out, wids, gsig[:, None] * h[None, :])
    e = gsig @ token_out[wids]
    d_token_in = np.zeros_like(token_in)
    np.add.at(d_token_in, ctx, np.broadcast_to(e / n_in, (ctx.shape[0], e.shape[0])))
    return float(loss), {"token_in": d_token_in, "token_out": d_token_out, "dvec": e / n_in}


def _noise_table(vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    """Ids carrying sampling mass and their cumulative unigram^0.75 weights."""
    freqs = np.asarray(vocab.frequencies, dtype=np.float64)
    mass = freqs**NOISE_POWER
    ids = np.nonzero(mass > 0)[0].astype(np.int64)
    if ids.size == 0:
        return np.array([UNK_ID], dtype=np.int64), np.array([1.0])
    weights = mass[ids]
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0
    return ids, cdf


def _draw_negatives(rng, noise_ids, noise_cdf, n_windows: int, k: int) -> np.ndarray:
    picks = np.searchsorted(noise_cdf, rng.random((n_windows, k)), side="right")
    return noise_ids[picks]


def _token_hash_seed(tokens) -> int:
    digest = hashlib.sha256(" ".join(tokens).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _ids_hash_seed(ids: np.ndarray) -> int:
    digest = hashlib.sha256(np.ascontiguousarray(ids, dtype="<i8").tobytes()).digest()
    return int.from_bytes(digest[:8], "little")


class Doc2VecModel:
    """Trained paragraph-vector model; immutable after training."""

    kind = KIND

    def __init__(
        self,
        token_in: np.ndarray,
        token_out: np.ndarray,
        doc_vectors: np.ndarray,
        vocab: Vocabulary,
        config: Doc2VecConfig,
        tokenizer_options: TokenizerOptions,
        min_count: int,
        epoch_losses: tuple[float, ...] = (),
        corpus_fingerprint: str = "",
    ):
        if token_in.shape != token_out.shape or token_in.shape[1] != config.dim:
            raise ConfigError("token matrix shapes are inconsistent with the config")
        if doc_vectors.ndim != 2 or doc_vectors.shape[1] != config.dim:
            raise ConfigError("doc_vectors shape is inconsistent with the config")
        for name, arr in (("token_in", token_in), ("token_out", token_out), ("doc_vectors", doc_vectors)):
            if not np.isfinite(arr).all():
                raise ConfigError(f"{name} contains non-finite values")
        self.token_in = token_in
        self.token_out = token_out
        self.doc_vectors = doc_vectors
        self.vocab = vocab
        self.config = config
        self.tokenizer_options = tokenizer_options
        self.min_count = int(min_count)
        self.epoch_losses = tuple(float(x) for x in epoch_losses)
        self.corpus_fingerprint = corpus_fingerprint
        self._noise = _noise_table(vocab)

    @property
    def dim(self) -> int:
        return self.config.dim

    def infer_vector(self, seq: TokenSequence, steps: int | None = None, backend=None) -> np.ndarray:
        """Fit a fresh document vector for one query, token matrices frozen.

        Deterministic: the vector's initialization and negative draws are
        seeded from a hash of the token sequence.
        """
        steps = self.config.infer_steps if steps is None else steps
        if steps < 1:
            raise ValueError("steps must be >= 1")
        ids = encode(self.vocab, seq)
        rng = np.random.default_rng(_token_hash_seed(seq.tokens))
        vec = (rng.random(self.dim) - 0.5) / self.dim
        n = ids.shape[0]
        if n == 0:
            return vec
        kern = kernels.resolve(backend)
        noise_ids, noise_cdf = self._noise
        cfg = self.config
        total = steps * n
        done = 0
        for _ in range(steps):
            negs = _draw_negatives(rng, noise_ids, noise_cdf, n, cfg.negatives)
            alphas = cfg.alpha + (cfg.alpha_min - cfg.alpha) * ((done + np.arange(n)) / total)
            done += n
            kern.doc2vec_train_document(
                self.token_in, self.token_out, vec, ids, negs, alphas, cfg.window, False
            )
        return vec

    def embed_text(self, text: str, backend=None) -> np.ndarray:
        return self.infer_vector(tokenize(text, self.tokenizer_options), backend=backend)

    def to_artifact(self) -> ModelArtifact:
        art = ModelArtifact(kind=KIND)
        art.put_json("vocab", self.vocab.to_json_dict())
        art.put_matrix("token_in", self.token_in)
        art.put_matrix("token_out", self.token_out)
        art.put_matrix("doc_vectors", self.doc_vectors)
        art.put_json(
            "metadata",
            {
                "config": self.config.to_json_dict(),
                "tokenizer": self.tokenizer_options.to_json_dict(),
                "min_count": self.min_count,
                "epoch_losses": list(self.epoch_losses),
                "corpus_fingerprint": self.corpus_fingerprint,
            },
        )
        return art

    @classmethod
    def from_artifact(cls, art: ModelArtifact) -> "Doc2VecModel":
        meta = art.json("metadata")
        return cls(
            token_in=art.matrix("token_in"),
            token_out=art.matrix("token_out"),
            doc_vectors=art.matrix("doc_vectors"),
            vocab=Vocabulary.from_json_dict(art.json("vocab")),
            config=Doc2VecConfig.from_json_dict(meta["config"]),
            tokenizer_options=TokenizerOptions.from_json_dict(meta["tokenizer"]),
            min_count=meta["min_count"],
            epoch_losses=meta["epoch_losses"],
            corpus_fingerprint=meta["corpus_fingerprint"],
        )

    def save(self, path) -> None:
        save_model(self.to_artifact(), path)

    @classmethod
    def load(cls, path) -> "Doc2VecModel":
        return cls.from_artifact(load_model(path, expect_kind=KIND))


def corpus_fingerprint(log: WorkloadLog) -> str:
    digest = hashlib.sha256()
    for rec in log:
        digest.update(rec.query_text.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def train_doc2vec(
    log: WorkloadLog,
    config: Doc2VecConfig = Doc2VecConfig(),
    tokenizer_options: TokenizerOptions = TokenizerOptions(),
    min_count: int = 2,
    backend=None,
) -> Doc2VecModel:
    """Train on a workload; deterministic for a fixed seed and corpus order.

    SGD with a linear learning-rate decay from alpha to alpha_min over all
    (epoch, window) steps; the mean window loss is recorded per epoch.
    """
    if len(log) == 0:
        raise ConfigError("cannot train on an empty workload")
    seqs = [tokenize(rec.query_text, tokenizer_options) for rec in log]
    vocab = build_vocabulary(seqs, min_count)
    encoded = [encode(vocab, s) for s in seqs]
    total_windows = sum(e.shape[0] for e in encoded)
    if total_windows == 0:
        raise ConfigError("corpus tokenizes to nothing; cannot train")

    rng = np.random.default_rng(config.seed)
    dim = config.dim
    token_in = (rng.random((len(vocab), dim)) - 0.5) / dim
    doc_vectors = (rng.random((len(encoded), dim)) - 0.5) / dim
    token_out = np.zeros((len(vocab), dim))
    noise_ids, noise_cdf = _noise_table(vocab)

    # negative-sample streams are keyed on (seed, document content, epoch):
    # identical documents receive identical noise, so their vectors contract
    # toward each other instead of riding separate SGD noise floors
    doc_keys = [_ids_hash_seed(ids) for ids in encoded]

    kern = kernels.resolve(backend)
    total_steps = config.epochs * total_windows
    epoch_losses = []
    step = 0
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for doc_idx, ids in enumerate(encoded):
            n = ids.shape[0]
            if n == 0:
                continue
            noise_rng = np.random.default_rng((config.seed, doc_keys[doc_idx], epoch))
            negs = _draw_negatives(noise_rng, noise_ids, noise_cdf, n, config.negatives)
            alphas = config.alpha + (config.alpha_min - config.alpha) * (
                (step + np.arange(n)) / total_steps
            )
            step += n
            loss = kern.doc2vec_train_document(
                token_in, token_out, doc_vectors[doc_idx], ids, negs, alphas, config.window, True
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, document {doc_idx}")
            epoch_loss += loss
        epoch_losses.append(epoch_loss / total_windows)

    return Doc2VecModel(
        token_in=token_in,
        token_out=token_out,
        doc_vectors=doc_vectors,
        vocab=vocab,
        config=config,
        tokenizer_options=tokenizer_options,
        min_count=min_count,
        epoch_losses=tuple(epoch_losses),
        corpus_fingerprint=corpus_fingerprint(log),
    )
