"""Decoder-only transformer with a lazily-rotated KV cache.

Block layout is fixed: pre-norm RMSNorm, multi-head causal self-attention
with rotary positions, residual add, RMSNorm, SiLU-gated MLP, residual add.
Keys are cached before rotation so the positional mapping can change between
two reads of the same cache.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SequenceLengthError, ShapeError, VocabError
from .numerics import masked_softmax, rms_norm, silu
from .posenc import Grouped, MultiScale, RopeParams, head_ratio, rotate, theta_schedule

NORM_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    head_dim: int
    mlp_dim: int
    vocab_size: int
    max_seq_len: int
    rope_base: float = 10000.0
    tied_embeddings: bool = False

    def __post_init__(self):
        for name in ("n_layers", "n_heads", "head_dim", "mlp_dim", "vocab_size", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.head_dim % 2:
            raise ConfigError(f"head_dim must be even, got {self.head_dim}")
        if not self.rope_base > 0:
            raise ConfigError("rope_base must be positive")

    @property
    def hidden_dim(self):
        return self.n_heads * self.head_dim

    @property
    def rope(self):
        return RopeParams(self.head_dim, self.rope_base)

    def to_dict(self):
        return {
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "head_dim": self.head_dim,
            "hidden_dim": self.hidden_dim,
            "mlp_dim": self.mlp_dim,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
            "rope_base": self.rope_base,
            "tied_embeddings": self.tied_embeddings,
        }


@dataclass
class LayerWeights:
    attn_norm: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    mlp_norm: np.ndarray
    w_gate: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray


@dataclass
class Weights:
    token_embedding: np.ndarray
    layers: list
    final_norm: np.ndarray
    output: np.ndarray = None  # None when tied to token_embedding

    def named_tensors(self):
        yield "token_embedding", self.token_embedding
        for i, lw in enumerate(self.layers):
            for name in LayerWeights.__dataclass_fields__:
                yield f"layers.{i}.{name}", getattr(lw, name)
        yield "final_norm", self.final_norm
        if self.output is not None:
            yield "output", self.output


def expected_shapes(config):
    d, m = config.hidden_dim, config.mlp_dim
    shapes = {"token_embedding": (config.vocab_size, d), "final_norm": (d,)}
    for i in range(config.n_layers):
        p = f"layers.{i}."
        shapes.update({
            p + "attn_norm": (d,), p + "wq": (d, d), p + "wk": (d, d), p + "wv": (d, d), p + "wo": (d, d),
            p + "mlp_norm": (d,), p + "w_gate": (d, m), p + "w_up": (d, m), p + "w_down": (m, d),
        })
    if not config.tied_embeddings:
        shapes["output"] = (d, config.vocab_size)
    return shapes


def weights_from_tensors(config, tensors):
    layers = []
    for i in range(config.n_layers):
        layers.append(LayerWeights(**{n: tensors[f"layers.{i}.{n}"] for n in LayerWeights.__dataclass_fields__}))
    return Weights(
        token_embedding=tensors["token_embedding"],
        layers=layers,
        final_norm=tensors["final_norm"],
        output=None if config.tied_embeddings else tensors["output"],
    )


def random_weights(config, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith("norm"):
            tensors[name] = 1.0 + 0.1 * rng.standard_normal(shape)
        else:
            tensors[name] = scale * rng.standard_normal(shape) / np.sqrt(shape[0])
    return weights_from_tensors(config, tensors)


def zero_weights(config):
    tensors = {n: np.zeros(s) for n, s in expected_shapes(config).items()}
    return weights_from_tensors(config, tensors)


@dataclass
class KVCache:
    """Unrotated keys and values, ``keys[layer]`` shaped (n_heads, capacity, head_dim)."""

    keys: list
    values: list
    current_len: int = 0

    @classmethod
    def empty(cls, config):
        shape = (config.n_heads, config.max_seq_len, config.head_dim)
        return cls(
            keys=[np.zeros(shape) for _ in range(config.n_layers)],
            values=[np.zeros(shape) for _ in range(config.n_layers)],
        )

    @property
    def capacity(self):
        return self.keys[0].shape[1]

    def layer_keys(self, layer):
        return self.keys[layer][:, : self.current_len]

    def layer_values(self, layer):
        return self.values[layer][:, : self.current_len]

    def copy(self):
        return KVCache([k.copy() for k in self.keys], [v.copy() for v in self.values], self.current_len)


@dataclass
class AttentionSnapshot:
    """Last-prompt-token attention rows, ``rows[layer]`` shaped (n_heads, context_len)."""

    rows: list
    context_len: int

    @property
    def n_layers(self):
        return len(self.rows)

    @property
    def n_heads(self):
        return self.rows[0].shape[0]

    def head(self, layer, head):
        return self.rows[layer][head]

    def to_dict(self):
        return {
            "context_len": self.context_len,
            "rows": [[list(map(float, h)) for h in layer] for layer in self.rows],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([np.array(layer, dtype=np.float64) for layer in d["rows"]], int(d["context_len"]))


@dataclass
class PrefillResult:
    logits: np.ndarray
    cache: KVCache
    snapshot: AttentionSnapshot = None
    encoder: object = None  # encoder active at the end of prefill
    layer_outputs: list = field(default_factory=list, repr=False)


def _scores_separable(q, k, q_pos, k_pos, spec, layer, rope):
    """Per-head scores when each head maps positions by a plain divisor."""
    n_heads = q.shape[0]
    out = np.empty((n_heads, q.shape[1], k.shape[1]))
    for h in range(n_heads):
        r = head_ratio(spec, layer, h)
        qr = rotate(q[h], q_pos / r, rope)
        kr = rotate(k[h], k_pos / r, rope)
        out[h] = qr @ kr.T
    return out


def _scores_grouped(q, k, q_pos, k_pos, spec, rope):
    # score = sum_p cos(delta*theta_p) (qa ka + qb kb) + sin(delta*theta_p) (qa kb - qb ka)
    # with delta the remapped query-key distance; equal to rotating both sides
    theta = theta_schedule(rope)
    d = q_pos[:, None] - k_pos[None, :]
    delta = spec.relative(d).astype(np.float64)
    ang = delta[..., None] * theta
    cos, sin = np.cos(ang), np.sin(ang)
    qa, qb = q[..., 0::2], q[..., 1::2]
    ka, kb = k[..., 0::2], k[..., 1::2]
    dot = np.einsum("hip,hjp->hijp", qa, ka) + np.einsum("hip,hjp->hijp", qb, kb)
    cross = np.einsum("hip,hjp->hijp", qa, kb) - np.einsum("hip,hjp->hijp", qb, ka)
    return (dot * cos + cross * sin).sum(axis=-1)


def attention(q, k, v, q_pos, k_pos, spec, layer, rope):
    """Causal attention for all heads of one layer.

    ``q`` is (H, Tq, dh), ``k`` and ``v`` are (H, Tk, dh), all unrotated.
    Returns the head outputs (H, Tq, dh) and probabilities (H, Tq, Tk).
    """
    q_pos = np.asarray(q_pos, dtype=np.int64)
    k_pos = np.asarray(k_pos, dtype=np.int64)
    if isinstance(spec, Grouped):
        scores = _scores_grouped(q, k, q_pos, k_pos, spec, rope)
    else:
        scores = _scores_separable(q, k, q_pos, k_pos, spec, layer, rope)
    scores = scores / np.sqrt(rope.head_dim)
    mask = k_pos[None, :] <= q_pos[:, None]
    probs = masked_softmax(scores, mask[None])
    return probs @ v, probs


class TransformerModel:
    """Immutable config + weights; forward passes live in module functions."""

    def __init__(self, config, weights):
        self.config = config
        self.weights = weights
        _check_shapes(config, weights)

    @property
    def output_matrix(self):
        w = self.weights
        return w.token_embedding.T if w.output is None else w.output

    def prefill(self, tokens, encoder, capture=False, layer_hook=None):
        return forward_prefill(self, tokens, encoder, capture=capture, layer_hook=layer_hook)

    def decode_step(self, token, cache, encoder):
        return forward_decode_step(self, token, cache, encoder)

    def generate(self, tokens, encoder, max_new):
        return greedy_generate(self, tokens, encoder, max_new)


def _check_shapes(config, weights):
    shapes = expected_shapes(config)
    got = dict(weights.named_tensors())
    if set(got) != set(shapes):
        missing = sorted(set(shapes) - set(got))
        extra = sorted(set(got) - set(shapes))
        raise ShapeError(f"tensor set mismatch; missing={missing} unexpected={extra}")
    for name, shape in shapes.items():
        if tuple(np.shape(got[name])) != shape:
            raise ShapeError(f"{name}: expected {shape}, got {np.shape(got[name])}")


def _check_tokens(config, tokens):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ShapeError("tokens must be a 1-D sequence")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= config.vocab_size):
        raise VocabError(f"token id out of range [0, {config.vocab_size})")
    return tokens


def _check_encoder(config, encoder):
    if isinstance(encoder, MultiScale):
        encoder.check_covers(config.n_layers, config.n_heads)


def _split_heads(x, n_heads):
    t, d = x.shape
    return x.reshape(t, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _mlp(lw, x):
    h = rms_norm(x, lw.mlp_norm, NORM_EPS)
    return (silu(h @ lw.w_gate) * (h @ lw.w_up)) @ lw.w_down


def _logits(model, x_last):
    return rms_norm(x_last, model.weights.final_norm, NORM_EPS) @ model.output_matrix


def forward_prefill(model, tokens, encoder, capture=False, layer_hook=None):
    """Run the whole prompt, fill a fresh cache and return last-token logits.

    ``layer_hook(layer, last_rows)`` is called after each layer's attention
    with the last query's probabilities (H, T). If it returns a new encoder
    the layer's attention is recomputed with it, and that encoder is used for
    every later layer. Captured snapshot rows are the pre-hook ones.
    """
    cfg = model.config
    tokens = _check_tokens(cfg, tokens)
    n = len(tokens)
    if n < 1:
        raise SequenceLengthError("prompt must contain at least one token")
    if n > cfg.max_seq_len:
        raise SequenceLengthError(f"prompt of {n} tokens exceeds max_seq_len={cfg.max_seq_len}")
    _check_encoder(cfg, encoder)
    rope = cfg.rope
    pos = np.arange(n)
    cache = KVCache.empty(cfg)
    rows = []
    x = model.weights.token_embedding[tokens].astype(np.float64)
    for li, lw in enumerate(model.weights.layers):
        h = rms_norm(x, lw.attn_norm, NORM_EPS)
        q = _split_heads(h @ lw.wq, cfg.n_heads)
        k = _split_heads(h @ lw.wk, cfg.n_heads)
        v = _split_heads(h @ lw.wv, cfg.n_heads)
        cache.keys[li][:, :n] = k
        cache.values[li][:, :n] = v
        out, probs = attention(q, k, v, pos, pos, encoder, li, rope)
        last = probs[:, -1, :].copy()
        if capture:
            rows.append(last)
        if layer_hook is not None:
            new_encoder = layer_hook(li, last)
            if new_encoder is not None:
                _check_encoder(cfg, new_encoder)
                encoder = new_encoder
                out, _ = attention(q, k, v, pos, pos, encoder, li, rope)
        x = x + _merge_heads(out) @ lw.wo
        x = x + _mlp(lw, x)
    cache.current_len = n
    snapshot = AttentionSnapshot(rows, n) if capture else None
    return PrefillResult(_logits(model, x[-1]), cache, snapshot, encoder)


def forward_decode_step(model, token, cache, encoder):
    """Append one token to ``cache`` (in place) and return its logits."""
    cfg = model.config
    if cache.current_len < 1:
        raise SequenceLengthError("decode needs a prefilled cache")
    if cache.current_len >= cfg.max_seq_len:
        raise SequenceLengthError(f"cache is full at max_seq_len={cfg.max_seq_len}")
    tok = _check_tokens(cfg, [token])
    _check_encoder(cfg, encoder)
    rope = cfg.rope
    t = cache.current_len
    q_pos = np.array([t])
    k_pos = np.arange(t + 1)
    x = model.weights.token_embedding[tok].astype(np.float64)
    for li, lw in enumerate(model.weights.layers):
        h = rms_norm(x, lw.attn_norm, NORM_EPS)
        q = _split_heads(h @ lw.wq, cfg.n_heads)
        cache.keys[li][:, t] = (h @ lw.wk).reshape(cfg.n_heads, cfg.head_dim)
        cache.values[li][:, t] = (h @ lw.wv).reshape(cfg.n_heads, cfg.head_dim)
        k = cache.keys[li][:, : t + 1]
        v = cache.values[li][:, : t + 1]
        out, _ = attention(q, k, v, q_pos, k_pos, encoder, li, rope)
        x = x + _merge_heads(out) @ lw.wo
        x = x + _mlp(lw, x)
    cache.current_len = t + 1
    return _logits(model, x[-1])


def argmax_token(logits):
    # np.argmax returns the first maximum, i.e. the lowest token id on ties
    return int(np.argmax(logits))


def greedy_generate(model, tokens, encoder, max_new):
    if max_new < 0:
        raise ValueError("max_new must be >= 0")
    tokens = _check_tokens(model.config, tokens)
    if len(tokens) + max_new > model.config.max_seq_len:
        raise SequenceLengthError("prompt plus continuation exceeds max_seq_len")
    if max_new == 0:
        return []
    res = forward_prefill(model, tokens, encoder)
    return decode_from(model, res.logits, res.cache, encoder, max_new)


def decode_from(model, logits, cache, encoder, max_new):
    """Greedy continuation starting from prefill ``logits`` over ``cache``."""
    out = []
    for i in range(max_new):
        tok = argmax_token(logits)
        out.append(tok)
        if i + 1 < max_new:
            logits = forward_decode_step(model, tok, cache, encoder)
    return out
