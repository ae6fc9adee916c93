"""Small decoder-style transformer used to exercise the adapters.

Post-norm residual blocks: X' = LayerNorm(X + MHSA(X)) and
Y = LayerNorm(X' + FFN(X')), with GELU in the FFN and causal masking by
default (disable via `causal=False` for encoder-style tests). Linear
layers carry no bias. Adapted linear modules are addressed as
"L{layer}.{kind}" with kind in {q, k, v, o, ffn1, ffn2}.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (Tensor, add, concat_cols, concat_rows, cross_entropy,
                     embedding, gelu, layer_norm, matmul, scale, slice_cols,
                     slice_rows, softmax_rows, transpose)

MASK_VALUE = -1e9  # large finite penalty; exp() underflows to exactly 0


@dataclass
class ToyTransformerConfig:
    layers: int = 2
    d_model: int = 64
    heads: int = 4
    ffn_dim: int = 256
    vocab: int = 64
    context: int = 32
    causal: bool = True
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )

    @property
    def d_head(self):
        return self.d_model // self.heads

    def kind_shape(self, kind):
        d, f = self.d_model, self.ffn_dim
        return {"q": (d, d), "k": (d, d), "v": (d, d), "o": (d, d),
                "ffn1": (d, f), "ffn2": (f, d)}[kind]


class ToyTransformer:
    """Backbone parameters plus optional per-module adapters."""

    def __init__(self, cfg, weights=None, seed=0):
        self.cfg = cfg
        self.adapters = {}  # module id -> AdapterState | LoraState
        self._masks = {}
        if weights is None:
            weights = self._init_weights(seed)
        self.params = {name: Tensor(w, name=name) for name, w in weights.items()}

    def _init_weights(self, seed):
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        d, f = cfg.d_model, cfg.ffn_dim

        def lin(d_in, d_out):
            return rng.normal(0.0, 1.0 / math.sqrt(d_in), size=(d_in, d_out))

        w = {
            "tok_emb": rng.normal(0.0, 0.02, size=(cfg.vocab, d)),
            "pos_emb": rng.normal(0.0, 0.02, size=(cfg.context, d)),
            "head": lin(d, cfg.vocab),
        }
        for i in range(cfg.layers):
            w[f"L{i}.q"] = lin(d, d)
            w[f"L{i}.k"] = lin(d, d)
            w[f"L{i}.v"] = lin(d, d)
            w[f"L{i}.o"] = lin(d, d)
            w[f"L{i}.ffn1"] = lin(d, f)
            w[f"L{i}.ffn2"] = lin(f, d)
            for ln in ("ln1", "ln2"):
                w[f"L{i}.{ln}.g"] = np.ones(d)
                w[f"L{i}.{ln}.b"] = np.zeros(d)
        return w

    # -------------------------------------------------------------- plumbing

    def weights(self):
        """Backbone arrays by name (adapters excluded)."""
        return {name: t.data.copy() for name, t in self.params.items()}

    def set_backbone_trainable(self, trainable):
        for t in self.params.values():
            t.requires_grad = trainable

    def linear_module_ids(self, kinds=("q", "k", "v", "o", "ffn1", "ffn2")):
        return [f"L{i}.{k}" for i in range(self.cfg.layers) for k in kinds]

    def linear(self, x, module):
        st = self.adapters.get(module)
        if st is not None:
            return st.forward(x)
        return matmul(x, self.params[module])

    def _mask(self, n):
        if n not in self._masks:
            m = np.triu(np.full((n, n), MASK_VALUE), k=1)
            self._masks[n] = m
        return Tensor(self._masks[n])

    # --------------------------------------------------------------- forward

    def mhsa_forward(self, x, layer, n):
        """Multi-head causal attention over (b*n) x d rows grouped by sequence."""
        cfg = self.cfg
        rows = x.data.shape[0]
        if rows % n != 0:
            raise ShapeError(f"{rows} rows do not split into length-{n} sequences")
        b = rows // n
        q = self.linear(x, f"L{layer}.q")
        k = self.linear(x, f"L{layer}.k")
        v = self.linear(x, f"L{layer}.v")
        inv_sqrt_dh = 1.0 / math.sqrt(cfg.d_head)
        mask = self._mask(n) if cfg.causal else None

        seq_outs = []
        for s in range(b):
            qs = slice_rows(q, s * n, (s + 1) * n)
            ks = slice_rows(k, s * n, (s + 1) * n)
            vs = slice_rows(v, s * n, (s + 1) * n)
            heads = []
            for h in range(cfg.heads):
                j0, j1 = h * cfg.d_head, (h + 1) * cfg.d_head
                qh = slice_cols(qs, j0, j1)
                kh = slice_cols(ks, j0, j1)
                vh = slice_cols(vs, j0, j1)
                scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh)
                if mask is not None:
                    scores = add(scores, mask)
                heads.append(matmul(softmax_rows(scores), vh))
            seq_outs.append(concat_cols(heads))
        out = concat_rows(seq_outs) if b > 1 else seq_outs[0]
        return self.linear(out, f"L{layer}.o")

    def block_forward(self, x, layer, n):
        cfg = self.cfg
        attn = self.mhsa_forward(x, layer, n)
        x1 = layer_norm(add(x, attn), self.params[f"L{layer}.ln1.g"],
                        self.params[f"L{layer}.ln1.b"], cfg.ln_eps)
        ffn = self.linear(gelu(self.linear(x1, f"L{layer}.ffn1")), f"L{layer}.ffn2")
        return layer_norm(add(x1, ffn), self.params[f"L{layer}.ln2.g"],
                          self.params[f"L{layer}.ln2.b"], cfg.ln_eps)

    def forward(self, tokens):
        """tokens: (b, n) int array -> logits Tensor of shape (b*n, vocab)."""
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        b, n = tokens.shape
        if n > self.cfg.context:
            raise ShapeError(f"sequence length {n} exceeds context {self.cfg.context}")
        pos = np.tile(np.arange(n), b)
        x = add(embedding(self.params["tok_emb"], tokens.reshape(-1)),
                embedding(self.params["pos_emb"], pos))
        for i in range(self.cfg.layers):
            x = self.block_forward(x, i, n)
        return matmul(x, self.params["head"])

    def loss(self, tokens, targets):
        return cross_entropy(self.forward(tokens), np.asarray(targets).reshape(-1))
