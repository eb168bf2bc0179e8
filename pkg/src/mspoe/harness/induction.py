"""Hand-set weights for a two-layer retrieval model.

Residual stream layout (one block of coordinates per role)::

    K     identity of the current token if it is a key/marker
    V     identity of the current token if it is a value/answer
    PK    K-identity of the previous token (written by layer 0)
    O     retrieved value identity (read by the unembedding)
    CONST a constant 1
    FLAGS one-hot token type (key, value, filler)
    NPK   set when the previous token is not a key, so |PK|^2 + NPK^2 is
          the same at every position and RMS norm scales them alike

Layer 0 has one previous-token head driven purely by rotary phase: its
score peaks at a relative distance slightly under one token, so it copies
the key identity of the preceding token into PK. At position 0 that head
can only see the token itself, so a second "sink" head, which attends to
any non-key token, subtracts the same copy there; everywhere else it lands
on tokens without a key identity and adds nothing. The third head is idle.

Layer 1 holds the retrieval heads:

* the content head matches the query's K against every position's PK (and
  against K itself) and copies V into O. Its attention follows the
  relevant item wherever it sits.
* the begin head attends to value tokens with a rotary term rising linearly
  in distance, so it favours the earliest values.
* the end head uses the mirrored term and favours the most recent values.

Both biased heads also copy V into O; their pull towards the edges competes
with the content head when the relevant item is in the middle. The MLPs are
zero.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..model import ModelConfig, TransformerModel, expected_shapes, weights_from_tensors
from ..posenc import theta_schedule
from .tasks import Vocab

@dataclass(frozen=True)
class InductionParams:
    seed: int = 0
    n_heads: int = 3
    head_dim: int = 16
    rope_base: float = 10000.0
    id_dim: int = 10
    n_keys: int = 32
    n_values: int = 32
    n_filler: int = 32
    max_seq_len: int = 128
    # head slots; layer 0 uses prev_head, layer 1 the other three
    prev_head: int = 2
    content_head: int = 1
    begin_head: int = 0
    end_head: int = 2
    # previous-token head
    prev_peak: float = 0.78
    prev_strength: float = 80.0
    prev_planes: tuple = (0, 1)
    prev_plane_weights: tuple = (1.0, 1.0)
    prev_copy: float = 1.2
    # layer-0 head cancelling the previous-token copy at position 0
    sink_head: int = 0
    sink_gain: float = 40.0
    # content head
    match_gain: float = 18.0
    self_match: float = 1.07
    content_recency: float = 0.0
    content_recency_plane: int = 2
    content_copy: float = 1.5
    # position-biased heads
    type_gain: float = 41.0
    begin_strength: float = 500.0
    begin_plane: int = 4
    begin_copy: float = 0.5
    end_strength: float = 500.0
    end_plane: int = 4
    end_copy: float = 0.4
    value_bias: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["prev_planes"] = list(self.prev_planes)
        d["prev_plane_weights"] = list(self.prev_plane_weights)
        return d


def fixture_vocab(p):
    k0 = 0
    v0 = k0 + p.n_keys
    f0 = v0 + p.n_values
    return Vocab(range(k0, v0), range(v0, f0), range(f0, f0 + p.n_filler))


class _Layout:
    def __init__(self, p):
        d = p.id_dim
        self.K = np.arange(0, d)
        self.V = np.arange(d, 2 * d)
        self.PK = np.arange(2 * d, 3 * d)
        self.O = np.arange(3 * d, 4 * d)
        self.CONST = 4 * d
        self.IS_KEY, self.IS_VAL, self.IS_FILL = 4 * d + 1, 4 * d + 2, 4 * d + 3
        self.NPK = 4 * d + 4
        self.width = 4 * d + 5


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _rot(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def build_induction_model(params=None):
    """Return ``(ModelConfig, Weights, Vocab)`` for the constructed model."""
    p = params or InductionParams()
    lay = _Layout(p)
    hidden = p.n_heads * p.head_dim
    if lay.width > hidden:
        raise ValueError(f"layout needs {lay.width} residual dims, model has {hidden}")
    if p.id_dim % 2 or p.id_dim >= p.head_dim:
        raise ValueError("id_dim must be even and leave a spare column in each head")
    vocab = fixture_vocab(p)
    cfg = ModelConfig(
        n_layers=2, n_heads=p.n_heads, head_dim=p.head_dim, mlp_dim=4, vocab_size=vocab.size,
        max_seq_len=p.max_seq_len, rope_base=p.rope_base, tied_embeddings=False,
    )
    theta = theta_schedule(cfg.rope)
    n_planes = p.head_dim // 2
    rng = np.random.default_rng(p.seed)
    t = {n: np.zeros(s) for n, s in expected_shapes(cfg).items()}

    emb = t["token_embedding"]
    emb[:, lay.CONST] = 1.0
    emb[np.ix_(list(vocab.keys), lay.K)] = _unit_rows(rng, len(vocab.keys), p.id_dim)
    emb[np.ix_(list(vocab.values), lay.V)] = _unit_rows(rng, len(vocab.values), p.id_dim)
    emb[list(vocab.keys), lay.IS_KEY] = 1.0
    emb[list(vocab.values), lay.IS_VAL] = 1.0
    # filler carries no identity; its flag makes up the missing norm
    emb[list(vocab.filler), lay.IS_FILL] = np.sqrt(2.0)

    # every token embedding has squared norm 3, so rms = sqrt(3 / hidden) at layer 0
    unit_gain = np.sqrt(3.0 / hidden)
    for li in range(2):
        t[f"layers.{li}.attn_norm"][:] = unit_gain
        t[f"layers.{li}.mlp_norm"][:] = 1.0
    t["final_norm"][:] = 1.0

    def cols(head, plane):
        base = head * p.head_dim + 2 * plane
        return np.array([base, base + 1])

    def id_planes(head):
        # the identity block occupies the highest (slowest) planes of the head
        first = n_planes - p.id_dim // 2
        return np.concatenate([cols(head, first + i) for i in range(p.id_dim // 2)])

    # layer 0, head 0: previous-token head
    wq, wk, wv, wo = (t[f"layers.0.{n}"] for n in ("wq", "wk", "wv", "wo"))
    for plane, w in zip(p.prev_planes, p.prev_plane_weights):
        c = cols(p.prev_head, plane)
        # q = R(-theta * peak) e_0, k = e_0 gives cos(theta * (d - peak))
        q_vec = _rot(-theta[plane] * p.prev_peak) @ np.array([1.0, 0.0])
        wq[lay.CONST, c] = p.prev_strength * w * q_vec
        wk[lay.CONST, c] = np.array([1.0, 0.0])
    vcols = np.arange(p.prev_head * p.head_dim, p.prev_head * p.head_dim + p.id_dim)
    wv[lay.K, vcols] = p.prev_copy
    wo[vcols, lay.PK] = 1.0
    npk = p.prev_head * p.head_dim + p.id_dim
    wv[lay.IS_VAL, npk] = p.prev_copy
    wv[lay.IS_FILL, npk] = p.prev_copy / np.sqrt(2.0)
    wo[npk, lay.NPK] = 1.0
    if p.sink_gain:
        # attends to any non-key token; at position 0 only the token itself is
        # visible, so it subtracts exactly what the previous-token head copied
        slow = cols(p.sink_head, n_planes - 1)
        wq[lay.CONST, slow[0]] = p.sink_gain
        wk[lay.IS_VAL, slow[0]] = 1.0
        wk[lay.IS_FILL, slow[0]] = 1.0 / np.sqrt(2.0)
        scols = np.arange(p.sink_head * p.head_dim, p.sink_head * p.head_dim + p.id_dim)
        wv[lay.K, scols] = -p.prev_copy
        wo[scols, lay.PK] = 1.0
        # ... and supplies the NPK the previous-token head could not
        npk = p.sink_head * p.head_dim + p.id_dim
        wv[lay.IS_KEY, npk] = p.prev_copy
        wo[npk, lay.NPK] = 1.0

    # layer 1 retrieval heads
    wq, wk, wv, wo = (t[f"layers.1.{n}"] for n in ("wq", "wk", "wv", "wo"))
    # residual entering layer 1 has squared norm ~4 at positions with PK filled
    idc = id_planes(p.content_head)
    wq[lay.K, idc] = p.match_gain
    wk[lay.PK, idc] = 1.0
    wk[lay.K, idc] = p.self_match
    if p.content_recency:
        c = cols(p.content_head, p.content_recency_plane)
        wq[lay.CONST, c[0]] = p.content_recency
        wk[lay.CONST, c[0]] = 1.0
    vc = np.arange(p.content_head * p.head_dim, p.content_head * p.head_dim + p.id_dim)
    wv[lay.V, vc] = p.content_copy
    wo[vc, lay.O] = 1.0

    for head, strength, plane, copy in (
        (p.begin_head, -p.begin_strength, p.begin_plane, p.begin_copy),
        (p.end_head, p.end_strength, p.end_plane, p.end_copy),
    ):
        slow = cols(head, n_planes - 1)
        wq[lay.CONST, slow[0]] = p.type_gain
        wk[lay.IS_VAL, slow[0]] = 1.0
        # q = R(-phi) e_0 against k = e_0 scores cos(theta d - phi) = +-sin(theta d),
        # a linear slope in distance while theta d stays small
        c = cols(head, plane)
        wq[lay.CONST, c] = abs(strength) * _rot(-np.copysign(np.pi / 2, -strength)) @ np.array([1.0, 0.0])
        wk[lay.CONST, c[0]] = 1.0
        hv = np.arange(head * p.head_dim, head * p.head_dim + p.id_dim)
        wv[lay.V, hv] = copy
        wo[hv, lay.O] = 1.0

    out = t["output"]
    out[np.ix_(lay.O, list(vocab.values))] = emb[np.ix_(list(vocab.values), lay.V)].T
    out[lay.CONST, list(vocab.values)] = p.value_bias
    return cfg, weights_from_tensors(cfg, t), vocab


def induction_model(params=None):
    cfg, w, vocab = build_induction_model(params)
    return TransformerModel(cfg, w), vocab
