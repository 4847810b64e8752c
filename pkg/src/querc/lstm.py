"""LSTM sequence autoencoder trained to reproduce its input tokens.

The encoder consumes the token sequence one token at a time from a zero
state; the decoder starts from the encoder's final (h, c) and is trained
with teacher forcing to emit the input tokens followed by EOS. The final
encoder hidden state is the query embedding. Training, backprop through
time, and gradient clipping are implemented here directly; only the inner
sequence recurrence is delegated to the kernel backends.

Serialized container sections, in order: vocab (JSON), embeddings (|V| x
d_in), then per cell wx (d_in x 4h), wh (h x 4h), b (4h) for the encoder
and decoder with gate blocks ordered (i, f, o, g), the output projection
(h x |V|) with its bias, and metadata (JSON).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from . import kernels
from .container import ModelArtifact, load_model, save_model
from .doc2vec import corpus_fingerprint
from .errors import ConfigError, EmbedError, TrainingDiverged
from .tokenizer import (
    EOS_ID,
    SOS_ID,
    TokenizerOptions,
    Vocabulary,
    build_vocabulary,
    encode,
    tokenize,
)
from .workload import WorkloadLog

KIND = "lstm_autoencoder"


@dataclass(frozen=True)
class LstmConfig:
    embed_dim: int = 64
    hidden: int = 128
    epochs: int = 10
    learning_rate: float = 0.25
    grad_clip: float = 5.0
    teacher_forcing: bool = True
    seed: int = 1

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden < 1 or self.epochs < 1:
            raise ConfigError("embed_dim, hidden, epochs must be >= 1")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ConfigError("learning_rate and grad_clip must be positive")

    def to_json_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden": self.hidden,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "grad_clip": self.grad_clip,
            "teacher_forcing": self.teacher_forcing,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "LstmConfig":
        return cls(**doc)


@dataclass
class LstmParams:
    """All trainable parameters. Gate blocks are ordered (i, f, o, g) along
    the 4h axis, which fixes the serialization layout."""

    embeddings: np.ndarray  # |V| x d_in, shared by encoder and decoder inputs
    wx_enc: np.ndarray  # d_in x 4h
    wh_enc: np.ndarray  # h x 4h
    b_enc: np.ndarray  # 4h
    wx_dec: np.ndarray
    wh_dec: np.ndarray
    b_dec: np.ndarray
    proj: np.ndarray  # h x |V|
    proj_b: np.ndarray  # |V|

    def __post_init__(self):
        for f in fields(self):
            arr = getattr(self, f.name)
            if not np.isfinite(arr).all():
                raise ConfigError(f"parameter {f.name} contains non-finite values")

    @property
    def hidden(self) -> int:
        return self.wh_enc.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def zeros(cls, vocab_size: int, embed_dim: int, hidden: int) -> "LstmParams":
        return cls(
            embeddings=np.zeros((vocab_size, embed_dim)),
            wx_enc=np.zeros((embed_dim, 4 * hidden)),
            wh_enc=np.zeros((hidden, 4 * hidden)),
            b_enc=np.zeros(4 * hidden),
            wx_dec=np.zeros((embed_dim, 4 * hidden)),
            wh_dec=np.zeros((hidden, 4 * hidden)),
            b_dec=np.zeros(4 * hidden),
            proj=np.zeros((hidden, vocab_size)),
            proj_b=np.zeros(vocab_size),
        )


def _init_params(vocab_size: int, config: LstmConfig, rng) -> LstmParams:
    h = config.hidden
    scale = 1.0 / np.sqrt(h)

    def cell():
        wx = rng.uniform(-scale, scale, (config.embed_dim, 4 * h))
        wh = rng.uniform(-scale, scale, (h, 4 * h))
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0  # forget-gate bias starts open
        return wx, wh, b

    embeddings = rng.uniform(-0.1, 0.1, (vocab_size, config.embed_dim))
    wx_enc, wh_enc, b_enc = cell()
    wx_dec, wh_dec, b_dec = cell()
    proj = rng.uniform(-scale, scale, (h, vocab_size))
    return LstmParams(
        embeddings=embeddings,
        wx_enc=wx_enc,
        wh_enc=wh_enc,
        b_enc=b_enc,
        wx_dec=wx_dec,
        wh_dec=wh_dec,
        b_dec=b_dec,
        proj=proj,
        proj_b=np.zeros(vocab_size),
    )


def lstm_cell_step(x, h, c, weights):
    """One LSTM cell step; weights is (wx, wh, b) with (i, f, o, g) blocks.

    i, f, o are sigmoid gates, g is tanh; c' = f*c + i*g, h' = o*tanh(c').
    No peepholes, no layer norm.
    """
    wx, wh, b = weights
    a = x @ wx + h @ wh + b
    n = h.shape[0]
    i = expit(a[:n])
    f = expit(a[n : 2 * n])
    o = expit(a[2 * n : 3 * n])
    g = np.tanh(a[3 * n :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def _run_encoder(params: LstmParams, ids: np.ndarray, kern):
    x = params.embeddings[ids]
    apre = x @ params.wx_enc + params.b_enc
    zero = np.zeros(params.hidden)
    hs, cs, gates, tc = kern.lstm_forward(apre, params.wh_enc, zero, zero)
    return x, hs, cs, gates, tc


def _greedy_decoder_inputs(params: LstmParams, n_steps: int, h0, c0) -> np.ndarray:
    """Decoder inputs when teacher forcing is off: SOS, then own argmaxes."""
    dec_in = np.empty(n_steps, dtype=np.int64)
    dec_in[0] = SOS_ID
    h, c = h0, c0
    weights = (params.wx_dec, params.wh_dec, params.b_dec)
    for t in range(n_steps - 1):
        h, c = lstm_cell_step(params.embeddings[dec_in[t]], h, c, weights)
        logits = h @ params.proj + params.proj_b
        dec_in[t + 1] = int(np.argmax(logits))
    return dec_in


def sequence_loss_and_grads(params: LstmParams, ids, teacher_forcing: bool = True, backend=None):
    """Full forward/backward for one sequence.

    Returns (mean per-token cross-entropy over the targets ids+[EOS],
    gradient dict keyed like LstmParams.arrays()).
    """
    kern = kernels.resolve(backend)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot train on an empty sequence")
    h_size = params.hidden

    x_enc, hs_e, cs_e, gates_e, tc_e = _run_encoder(params, ids, kern)
    h0_d, c0_d = hs_e[-1], cs_e[-1]

    targets = np.concatenate((ids, [EOS_ID]))
    n_steps = targets.shape[0]
    if teacher_forcing:
        dec_in = np.concatenate(([SOS_ID], ids))
    else:
        dec_in = _greedy_decoder_inputs(params, n_steps, h0_d, c0_d)

    x_dec = params.embeddings[dec_in]
    apre_d = x_dec @ params.wx_dec + params.b_dec
    hs_d, cs_d, gates_d, tc_d = kern.lstm_forward(apre_d, params.wh_dec, h0_d, c0_d)

    logits = hs_d @ params.proj + params.proj_b
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    sums = expz.sum(axis=1)
    rows = np.arange(n_steps)
    loss = float((np.log(sums) - z[rows, targets]).mean())

    dz = expz / sums[:, None]
    dz[rows, targets] -= 1.0
    dz /= n_steps

    zero = np.zeros(h_size)
    grads: dict[str, np.ndarray] = {}
    grads["proj"] = hs_d.T @ dz
    grads["proj_b"] = dz.sum(axis=0)
    dh_d = dz @ params.proj.T
    da_d, dh0_d, dc0_d = kern.lstm_backward(
        params.wh_dec, gates_d, cs_d, tc_d, c0_d, dh_d, zero, zero
    )
    grads["wx_dec"] = x_dec.T @ da_d
    grads["b_dec"] = da_d.sum(axis=0)
    h_prev_d = np.vstack((h0_d[None, :], hs_d[:-1]))
    grads["wh_dec"] = h_prev_d.T @ da_d

    demb = np.zeros_like(params.embeddings)
    np.add.at(demb, dec_in, da_d @ params.wx_dec.T)

    da_e, _, _ = kern.lstm_backward(
        params.wh_enc, gates_e, cs_e, tc_e, zero, np.zeros((ids.shape[0], h_size)), dh0_d, dc0_d
    )
    grads["wx_enc"] = x_enc.T @ da_e
    grads["b_enc"] = da_e.sum(axis=0)
    h_prev_e = np.vstack((np.zeros((1, h_size)), hs_e[:-1]))
    grads["wh_enc"] = h_prev_e.T @ da_e
    np.add.at(demb, ids, da_e @ params.wx_enc.T)
    grads["embeddings"] = demb
    return loss, grads


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place to a global L2 norm of at most max_norm;
    returns the post-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return max_norm
    return norm


@dataclass
class TrainingHistory:
    epoch_losses: tuple[float, ...]
    postclip_norms: tuple[float, ...]  # one entry per SGD step
    skipped_empty: int


class LstmModel:
    """Trained autoencoder; the encoder's final hidden state embeds a query."""

    kind = KIND

    def __init__(
        self,
        params: LstmParams,
        vocab: Vocabulary,
        config: LstmConfig,
        tokenizer_options: TokenizerOptions,
        min_count: int,
        epoch_losses: tuple[float, ...] = (),
        corpus_fingerprint: str = "",
        history: TrainingHistory | None = None,
    ):
        if params.vocab_size != len(vocab):
            raise ConfigError("parameter shapes do not match the vocabulary")
        if params.hidden != config.hidden or params.embed_dim != config.embed_dim:
            raise ConfigError("parameter shapes do not match the config")
        self.params = params
        self.vocab = vocab
        self.config = config
        self.tokenizer_options = tokenizer_options
        self.min_count = int(min_count)
        self.epoch_losses = tuple(float(x) for x in epoch_losses)
        self.corpus_fingerprint = corpus_fingerprint
        self.history = history

    @property
    def dim(self) -> int:
        return self.config.hidden

    def encode_ids(self, ids, backend=None) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise EmbedError("cannot encode an empty token sequence")
        kern = kernels.resolve(backend)
        _, hs, _, _, _ = _run_encoder(self.params, ids, kern)
        return hs[-1].copy()

    def embed_text(self, text: str, backend=None) -> np.ndarray:
        seq = tokenize(text, self.tokenizer_options)
        if len(seq) == 0:
            raise EmbedError("query tokenizes to nothing")
        return self.encode_ids(encode(self.vocab, seq), backend=backend)

    def reconstruct_ids(self, ids, max_len: int = 64) -> np.ndarray:
        """Greedy argmax decode from the encoder state; diagnostics only.

        Stops at EOS or after max_len tokens; argmax ties resolve to the
        lowest token id.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise EmbedError("cannot reconstruct from an empty sequence")
        p = self.params
        kern = kernels.resolve(None)
        _, hs, cs, _, _ = _run_encoder(p, ids, kern)
        h, c = hs[-1], cs[-1]
        weights = (p.wx_dec, p.wh_dec, p.b_dec)
        out: list[int] = []
        token = SOS_ID
        for _ in range(max_len):
            h, c = lstm_cell_step(p.embeddings[token], h, c, weights)
            token = int(np.argmax(h @ p.proj + p.proj_b))
            if token == EOS_ID:
                break
            out.append(token)
        return np.asarray(out, dtype=np.int64)

    def to_artifact(self) -> ModelArtifact:
        art = ModelArtifact(kind=KIND)
        art.put_json("vocab", self.vocab.to_json_dict())
        for name, arr in self.params.arrays().items():
            art.put_matrix(name, arr)
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
    def from_artifact(cls, art: ModelArtifact) -> "LstmModel":
        meta = art.json("metadata")
        params = LstmParams(**{f.name: art.matrix(f.name) for f in fields(LstmParams)})
        return cls(
            params=params,
            vocab=Vocabulary.from_json_dict(art.json("vocab")),
            config=LstmConfig.from_json_dict(meta["config"]),
            tokenizer_options=TokenizerOptions.from_json_dict(meta["tokenizer"]),
            min_count=meta["min_count"],
            epoch_losses=meta["epoch_losses"],
            corpus_fingerprint=meta["corpus_fingerprint"],
        )

    def save(self, path) -> None:
        save_model(self.to_artifact(), path)

    @classmethod
    def load(cls, path) -> "LstmModel":
        return cls.from_artifact(load_model(path, expect_kind=KIND))


def train_autoencoder(
    log: WorkloadLog,
    config: LstmConfig = LstmConfig(),
    tokenizer_options: TokenizerOptions = TokenizerOptions(),
    min_count: int = 2,
    backend=None,
) -> LstmModel:
    """Per-sequence SGD with full BPTT and global gradient-norm clipping.

    Sequence order is reshuffled each epoch from the seeded generator, so a
    fixed (corpus, config, seed) gives a bit-identical model. Queries that
    tokenize to nothing are skipped (they cannot be embedded either).
    """
    if len(log) == 0:
        raise ConfigError("cannot train on an empty workload")
    seqs = [tokenize(rec.query_text, tokenizer_options) for rec in log]
    vocab = build_vocabulary(seqs, min_count)
    encoded = [encode(vocab, s) for s in seqs]
    usable = [e for e in encoded if e.shape[0] > 0]
    skipped = len(encoded) - len(usable)
    if not usable:
        raise ConfigError("corpus tokenizes to nothing; cannot train")

    rng = np.random.default_rng(config.seed)
    params = _init_params(len(vocab), config, rng)
    kern = kernels.resolve(backend)

    epoch_losses = []
    postclip: list[float] = []
    arrays = params.arrays()
    for epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        total = 0.0
        for pos, seq_idx in enumerate(order):
            loss, grads = sequence_loss_and_grads(
                params, usable[seq_idx], config.teacher_forcing, backend=kern
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {pos}")
            postclip.append(clip_gradients(grads, config.grad_clip))
            for name, arr in arrays.items():
                arr -= config.learning_rate * grads[name]
            total += loss
        epoch_losses.append(total / len(usable))

    history = TrainingHistory(tuple(epoch_losses), tuple(postclip), skipped)
    return LstmModel(
        params=params,
        vocab=vocab,
        config=config,
        tokenizer_options=tokenizer_options,
        min_count=min_count,
        epoch_losses=tuple(epoch_losses),
        corpus_fingerprint=corpus_fingerprint(log),
        history=history,
    )
