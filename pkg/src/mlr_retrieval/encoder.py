"""Small pre-norm transformer encoder that exposes every layer's hidden states.

The encoder prepends a CLS slot (token id 0) at position 0, adds learned
positional embeddings, and runs L pre-norm blocks (self-attention + GELU
feed-forward, residual around each). Layer 0 of the output is the embedding
layer itself, so callers see L+1 stacks of states.

Query and document towers are two separate instances with their own
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tokenizer import CLS_ID, PAD_ID

MASK_BIAS = -1e9

POOLING_MODES = ("cls", "mean")


@dataclass
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    layers: int = 4
    heads: int = 4
    ff_dim: int = 0  # 0 means 4 * dim
    max_len: int = 64
    pooling_mode: str = "cls"

    def __post_init__(self):
        if self.ff_dim == 0:
            self.ff_dim = 4 * self.dim
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.max_len < 2:
            raise ValueError(f"max_len must be at least 2, got {self.max_len}")
        if self.pooling_mode not in POOLING_MODES:
            raise ValueError(f"pooling_mode must be one of {POOLING_MODES}")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must leave room for the CLS and pad ids")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "layers": self.layers,
            "heads": self.heads,
            "ff_dim": self.ff_dim,
            "max_len": self.max_len,
            "pooling_mode": self.pooling_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class EncoderOutput:
    """All hidden states for one sequence: (L+1, T+1, dim)."""

    hidden: Tensor
    length: int  # token count T, excluding the CLS slot
    pooling_mode: str

    @property
    def num_layers(self) -> int:
        return self.hidden.shape[0] - 1


@dataclass
class BatchedEncoding:
    """Per-layer states for a padded batch: L+1 tensors of (B, Tmax+1, dim)."""

    states: list[Tensor] = field(repr=False)
    lengths: np.ndarray  # token counts per sequence, excluding CLS
    pooling_mode: str

    @property
    def num_layers(self) -> int:
        return len(self.states) - 1

    @property
    def width(self) -> int:
        return self.states[0].shape[1]


class Encoder:
    def __init__(self, config: EncoderConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.config = config
        self.dtype = dtype
        if rng is None:
            rng = np.random.default_rng(0)
        self.params: dict[str, Tensor] = {}
        self._init_params(rng)

    def _param(self, name: str, array: np.ndarray) -> None:
        self.params[name] = Tensor(array.astype(self.dtype), requires_grad=True)

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        std = 0.02
        self._param("tok_emb", rng.normal(0.0, std, (c.vocab_size, c.dim)))
        self._param("pos_emb", rng.normal(0.0, std, (c.max_len, c.dim)))
        for i in range(c.layers):
            p = f"layers.{i}."
            self._param(p + "attn_norm.gain", np.ones(c.dim))
            self._param(p + "attn_norm.bias", np.zeros(c.dim))
            for proj in ("wq", "wk", "wv", "wo"):
                self._param(p + f"attn.{proj}", rng.normal(0.0, std, (c.dim, c.dim)))
            for b in ("bq", "bk", "bv", "bo"):
                self._param(p + f"attn.{b}", np.zeros(c.dim))
            self._param(p + "ffn_norm.gain", np.ones(c.dim))
            self._param(p + "ffn_norm.bias", np.zeros(c.dim))
            self._param(p + "ffn.w1", rng.normal(0.0, std, (c.dim, c.ff_dim)))
            self._param(p + "ffn.b1", np.zeros(c.ff_dim))
            self._param(p + "ffn.w2", rng.normal(0.0, std, (c.ff_dim, c.dim)))
            self._param(p + "ffn.b2", np.zeros(c.dim))

    # -- forward -------------------------------------------------------------

    def _block(self, x: Tensor, i: int, bias: Tensor | None) -> Tensor:
        c = self.config
        p = self.params
        pre = f"layers.{i}."
        batch, width, dim = x.shape
        heads, hd = c.heads, c.dim // c.heads

        h = ad.layer_norm(x, p[pre + "attn_norm.gain"], p[pre + "attn_norm.bias"])

        def split(t: Tensor) -> Tensor:
            return t.reshape(batch, width, heads, hd).transpose(0, 2, 1, 3)

        q = split(h @ p[pre + "attn.wq"] + p[pre + "attn.bq"])
        k = split(h @ p[pre + "attn.wk"] + p[pre + "attn.bk"])
        v = split(h @ p[pre + "attn.wv"] + p[pre + "attn.bv"])
        att = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd))
        if bias is not None:
            att = att + bias
        ctx = ad.softmax(att, axis=-1) @ v
        ctx = ctx.transpose(0, 2, 1, 3).reshape(batch, width, dim)
        x = x + (ctx @ p[pre + "attn.wo"] + p[pre + "attn.bo"])

        h2 = ad.layer_norm(x, p[pre + "ffn_norm.gain"], p[pre + "ffn_norm.bias"])
        ff = ad.gelu(h2 @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]) @ p[pre + "ffn.w2"]
        return x + (ff + p[pre + "ffn.b2"])

    def _forward(self, ids: np.ndarray, lengths: np.ndarray) -> list[Tensor]:
        c = self.config
        batch, width = ids.shape
        x = ad.embedding(self.params["tok_emb"], ids) + self.params["pos_emb"][0:width]

        bias = None
        if np.any(lengths + 1 < width):
            valid = np.arange(width)[None, :] < (lengths + 1)[:, None]
            mask = np.where(valid, 0.0, MASK_BIAS).astype(self.dtype)
            bias = Tensor(mask.reshape(batch, 1, 1, width))

        states = [x]
        for i in range(c.layers):
            x = self._block(x, i, bias)
            states.append(x)
        if not np.all(np.isfinite(states[-1].data)):
            raise FloatingPointError("encoder produced non-finite hidden states")
        return states

    def encode_batch(self, token_batches: list[list[int]]) -> BatchedEncoding:
        """Encode several token sequences at once, padded to a common width."""
        c = self.config
        if not token_batches:
            raise ValueError("encode_batch requires at least one sequence")
        lengths = np.array([len(t) for t in token_batches], dtype=np.int64)
        if np.any(lengths > c.max_len - 1):
            raise ValueError(
                f"sequence of {int(lengths.max())} tokens exceeds max_len - 1 "
                f"= {c.max_len - 1}; truncate via tokenize()"
            )
        width = int(lengths.max()) + 1
        ids = np.full((len(token_batches), width), PAD_ID, dtype=np.int64)
        ids[:, 0] = CLS_ID
        for r, toks in enumerate(token_batches):
            ids[r, 1 : 1 + len(toks)] = toks
        states = self._forward(ids, lengths)
        return BatchedEncoding(states=states, lengths=lengths, pooling_mode=c.pooling_mode)

    def encode(self, tokens: list[int]) -> EncoderOutput:
        """Encode one sequence, returning the full (L+1, T+1, dim) state stack."""
        enc = self.encode_batch([list(tokens)])
        width = enc.width
        stacked = ad.concat(
            [s.reshape(1, width, self.config.dim) for s in enc.states], axis=0
        )
        return EncoderOutput(hidden=stacked, length=len(tokens),
                             pooling_mode=self.config.pooling_mode)

    # -- parameter containers --------------------------------------------------

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in arrays:
                raise KeyError(f"checkpoint is missing parameter '{k}'")
            if arrays[k].shape != t.data.shape:
                raise ValueError(
                    f"parameter '{k}' shape {arrays[k].shape} != expected {t.data.shape}"
                )
            t.data = arrays[k].astype(self.dtype)
