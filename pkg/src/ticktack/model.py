"""Minimal decoder-only transformer over an explicit named-parameter set.

The model is a pure function of its parameters: weights live in a
``ParameterSet`` (an ordered mapping of float64 torch tensors with a
stable flat view) instead of module state, so losses can be treated as
functions of a flat vector, gradients checked against central finite
differences, and parameter updates compared bitwise across runs.

Per sequence the forward pass is: token embedding + learned position
embedding, optional additive temporal-encoding injection, ``n_layers``
pre-norm blocks of causal self-attention and a GELU MLP, a final layer
norm, and a linear head.  Optional low-rank adapter factor pairs ride on
every attention/MLP matrix; the second factor starts at zero so an
adapted model is exactly the base model until trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from . import geometry
from .annotate import AnnotatedSequence, mention_token_indices
from .errors import (
    DimensionMismatchError,
    EmptySequenceError,
    NonFiniteLossError,
    SequenceTooLongError,
)
from .geometry import EncodingConfig

_INIT_STD = 0.02
_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 128
    adapter_rank: int = 0
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.dim, self.n_layers, self.n_heads, self.max_seq_len) < 1:
            raise ValueError("all model sizes must be >= 1")
        if self.dim % 2 != 0:
            raise ValueError("dim must be even (temporal encodings pair sine/cosine entries)")
        if self.dim % self.n_heads != 0:
            raise ValueError("dim must be divisible by n_heads")
        if self.adapter_rank < 0:
            raise ValueError("adapter_rank must be >= 0")


class ParameterSet:
    """Ordered, named float64 tensors with a stable flat view.

    The flat view concatenates each tensor reshaped to 1-D in insertion
    order; two ParameterSets built from the same ModelConfig share names,
    shapes, and flat layout, making them elementwise comparable.
    """

    def __init__(self, tensors: dict[str, torch.Tensor]):
        self.tensors = dict(tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    @property
    def numel(self) -> int:
        return sum(t.numel() for t in self.tensors.values())

    def flat(self) -> torch.Tensor:
        return torch.cat([t.reshape(-1) for t in self.tensors.values()])

    def with_flat(self, flat: torch.Tensor) -> "ParameterSet":
        """Rebuild a set with these names/shapes from a flat vector."""
        if flat.numel() != self.numel:
            raise DimensionMismatchError(
                f"flat vector has {flat.numel()} entries, expected {self.numel}"
            )
        out, offset = {}, 0
        for name, t in self.tensors.items():
            n = t.numel()
            out[name] = flat[offset : offset + n].reshape(t.shape)
            offset += n
        return ParameterSet(out)

    def clone(self, requires_grad: bool = False) -> "ParameterSet":
        return ParameterSet(
            {k: v.detach().clone().requires_grad_(requires_grad) for k, v in self.tensors.items()}
        )

    def to_numpy(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy().copy() for k, v in self.tensors.items()}

    @classmethod
    def from_numpy(cls, arrays: dict[str, np.ndarray]) -> "ParameterSet":
        return cls({k: torch.as_tensor(v, dtype=torch.float64) for k, v in arrays.items()})


def _adapted_shapes(cfg: ModelConfig) -> list[tuple[str, int, int]]:
    """Matrices that receive low-rank adapter factors, with their shapes."""
    d, hidden = cfg.dim, 4 * cfg.dim
    shapes = []
    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        for m in ("attn.wq", "attn.wk", "attn.wv", "attn.wo"):
            shapes.append((f"{pre}.{m}", d, d))
        shapes.append((f"{pre}.mlp.w1", d, hidden))
        shapes.append((f"{pre}.mlp.w2", hidden, d))
    return shapes


def init(cfg: ModelConfig) -> ParameterSet:
    """Seed-deterministic initialization.

    Flat ordering: tok_emb, pos_emb, then per layer i the block
    layer{i}.(ln1.weight, ln1.bias, attn.wq, attn.bq, wk, bk, wv, bv,
    wo, bo, ln2.weight, ln2.bias, mlp.w1, mlp.b1, mlp.w2, mlp.b2), then
    ln_f.weight, ln_f.bias, head; adapter factor pairs (lora_a, lora_b
    per adapted matrix, layer by layer) follow at the end so the base
    tensors draw the same values at any rank.  Adapter second factors
    are zero, so the adapted model computes exactly the base model at
    step 0.
    """
    g = torch.Generator().manual_seed(cfg.seed)

    def randn(*shape):
        return torch.normal(0.0, _INIT_STD, shape, generator=g, dtype=torch.float64)

    d, hidden = cfg.dim, 4 * cfg.dim
    p: dict[str, torch.Tensor] = {}
    p["tok_emb"] = randn(cfg.vocab_size, d)
    p["pos_emb"] = randn(cfg.max_seq_len, d)

    def add_matrix(name, in_dim, out_dim, bias_name):
        p[name] = randn(in_dim, out_dim)
        p[bias_name] = torch.zeros(out_dim, dtype=torch.float64)

    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        p[f"{pre}.ln1.weight"] = torch.ones(d, dtype=torch.float64)
        p[f"{pre}.ln1.bias"] = torch.zeros(d, dtype=torch.float64)
        add_matrix(f"{pre}.attn.wq", d, d, f"{pre}.attn.bq")
        add_matrix(f"{pre}.attn.wk", d, d, f"{pre}.attn.bk")
        add_matrix(f"{pre}.attn.wv", d, d, f"{pre}.attn.bv")
        add_matrix(f"{pre}.attn.wo", d, d, f"{pre}.attn.bo")
        p[f"{pre}.ln2.weight"] = torch.ones(d, dtype=torch.float64)
        p[f"{pre}.ln2.bias"] = torch.zeros(d, dtype=torch.float64)
        add_matrix(f"{pre}.mlp.w1", d, hidden, f"{pre}.mlp.b1")
        add_matrix(f"{pre}.mlp.w2", hidden, d, f"{pre}.mlp.b2")

    p["ln_f.weight"] = torch.ones(d, dtype=torch.float64)
    p["ln_f.bias"] = torch.zeros(d, dtype=torch.float64)
    p["head"] = randn(d, cfg.vocab_size)

    if cfg.adapter_rank > 0:
        for name, in_dim, out_dim in _adapted_shapes(cfg):
            p[f"{name}.lora_a"] = randn(in_dim, cfg.adapter_rank)
            p[f"{name}.lora_b"] = torch.zeros(cfg.adapter_rank, out_dim, dtype=torch.float64)
    return ParameterSet(p)


def trainable_names(params: ParameterSet, cfg: ModelConfig) -> list[str]:
    """Adapter factors when adapters are present, otherwise everything."""
    if cfg.adapter_rank > 0:
        return [n for n in params.names() if ".lora_" in n]
    return params.names()


def _effective(params: ParameterSet, name: str) -> torch.Tensor:
    w = params[name]
    if f"{name}.lora_a" in params:
        w = w + params[f"{name}.lora_a"] @ params[f"{name}.lora_b"]
    return w


def _layer_norm(x, params, prefix):
    return F.layer_norm(
        x, (x.shape[-1],), params[f"{prefix}.weight"], params[f"{prefix}.bias"], _LN_EPS
    )


def _attention(x, params, prefix, cfg: ModelConfig):
    l, d = x.shape
    hd = d // cfg.n_heads
    q = x @ _effective(params, f"{prefix}.wq") + params[f"{prefix}.bq"]
    k = x @ _effective(params, f"{prefix}.wk") + params[f"{prefix}.bk"]
    v = x @ _effective(params, f"{prefix}.wv") + params[f"{prefix}.bv"]
    q = q.view(l, cfg.n_heads, hd).transpose(0, 1)
    k = k.view(l, cfg.n_heads, hd).transpose(0, 1)
    v = v.view(l, cfg.n_heads, hd).transpose(0, 1)
    scores = q @ k.transpose(-2, -1) / math.sqrt(hd)
    mask = torch.triu(torch.ones(l, l, dtype=torch.bool), diagonal=1)
    scores = scores.masked_fill(mask, float("-inf"))
    out = torch.softmax(scores, dim=-1) @ v
    out = out.transpose(0, 1).reshape(l, d)
    return out @ _effective(params, f"{prefix}.wo") + params[f"{prefix}.bo"]


def inject(
    h: torch.Tensor,
    te_x,
    te_y,
    mode: str = "all_positions",
    token_indices: list[int] | None = None,
) -> torch.Tensor:
    """Add the temporal encoding pair onto embedding rows.

    ``all_positions`` stamps every row; ``mention_positions`` stamps only
    the listed token indices.
    """
    te_x = torch.as_tensor(te_x, dtype=h.dtype)
    te_y = torch.as_tensor(te_y, dtype=h.dtype)
    if te_x.shape != (h.shape[1],) or te_y.shape != (h.shape[1],):
        raise DimensionMismatchError(
            f"encoding dim {tuple(te_x.shape)} does not match embedding width {h.shape[1]}"
        )
    bump = te_x + te_y
    if mode == "all_positions":
        return h + bump
    if mode == "mention_positions":
        out = h.clone()
        if token_indices:
            out[list(token_indices)] = out[list(token_indices)] + bump
        return out
    raise ValueError(f"unknown injection mode {mode!r}")


def forward_ids(
    params: ParameterSet,
    ids,
    cfg: ModelConfig,
    te: tuple | None = None,
    injection_mode: str = "all_positions",
    token_indices: list[int] | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Decoder forward over raw token ids; ``te`` is an optional (TE_x, TE_y) pair.

    Returns (logits, hidden) where hidden holds the final-layer states
    after the last normalization, one row per input token.
    """
    ids = torch.as_tensor(ids, dtype=torch.long)
    if ids.ndim != 1 or ids.numel() == 0:
        raise EmptySequenceError("forward needs a nonempty 1-D token sequence")
    l = ids.shape[0]
    if l > cfg.max_seq_len:
        raise SequenceTooLongError(f"sequence length {l} exceeds max_seq_len {cfg.max_seq_len}")
    if int(ids.max()) >= cfg.vocab_size or int(ids.min()) < 0:
        raise DimensionMismatchError("token id outside [0, vocab_size)")

    h = params["tok_emb"][ids] + params["pos_emb"][:l]
    if te is not None:
        h = inject(h, te[0], te[1], mode=injection_mode, token_indices=token_indices)
    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        h = h + _attention(_layer_norm(h, params, f"{pre}.ln1"), params, f"{pre}.attn", cfg)
        x = _layer_norm(h, params, f"{pre}.ln2")
        x = F.gelu(x @ _effective(params, f"{pre}.mlp.w1") + params[f"{pre}.mlp.b1"])
        h = h + x @ _effective(params, f"{pre}.mlp.w2") + params[f"{pre}.mlp.b2"]
    hidden = _layer_norm(h, params, "ln_f")
    logits = hidden @ params["head"]
    return logits, hidden


def forward(
    params: ParameterSet,
    seq: AnnotatedSequence,
    cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    injection_enabled: bool = False,
    injection_year: int | None = None,
    injection_mode: str = "all_positions",
) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward over an annotated sequence.

    When injection is enabled and the sequence has a year (its first
    mention, unless ``injection_year`` overrides it), the input embedding
    is stamped with that year's temporal encoding pair.
    """
    te = None
    token_indices = None
    year = injection_year
    if year is None and seq.mentions:
        year = seq.mentions[0].year.value
    if injection_enabled and year is not None:
        if enc_cfg.dim != cfg.dim:
            raise DimensionMismatchError(
                f"encoding dim {enc_cfg.dim} does not match model dim {cfg.dim}"
            )
        te = geometry.encode_year(year, enc_cfg)
        if injection_mode == "mention_positions" and seq.mentions:
            token_indices = mention_token_indices(seq, seq.mentions[0])
    return forward_ids(
        params, seq.tokens, cfg, te=te, injection_mode=injection_mode, token_indices=token_indices
    )


def ntp_loss(logits: torch.Tensor, targets) -> torch.Tensor:
    """Mean next-token cross-entropy; callers pass targets shifted left."""
    targets = torch.as_tensor(targets, dtype=torch.long)
    if logits.ndim != 2 or targets.ndim != 1 or logits.shape[0] != targets.shape[0]:
        raise DimensionMismatchError(
            f"logits {tuple(logits.shape)} incompatible with targets {tuple(targets.shape)}"
        )
    if targets.numel() == 0:
        raise EmptySequenceError("no predicted positions")
    return F.cross_entropy(logits, targets)


def sequence_ntp_loss(
    params: ParameterSet,
    seq: AnnotatedSequence,
    cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    injection_enabled: bool = False,
    injection_mode: str = "all_positions",
) -> torch.Tensor:
    """Next-token loss of one sequence (needs at least two tokens)."""
    logits, _ = forward(
        params, seq, cfg, enc_cfg,
        injection_enabled=injection_enabled, injection_mode=injection_mode,
    )
    return ntp_loss(logits[:-1], seq.tokens[1:])


def sentence_embedding(hidden: torch.Tensor) -> torch.Tensor:
    """Mean pooling over the final-layer states."""
    if hidden.ndim != 2 or hidden.shape[0] == 0:
        raise EmptySequenceError("cannot pool an empty hidden-state matrix")
    return hidden.mean(dim=0)


def gradients(loss_fn: Callable[[ParameterSet], torch.Tensor], params: ParameterSet) -> ParameterSet:
    """Reverse-mode gradient of a scalar loss, shaped like the parameters.

    Parameters the loss never touches get zero gradients.  Raises
    NonFiniteLossError if the loss is NaN or infinite.
    """
    leaves = params.clone(requires_grad=True)
    loss = loss_fn(leaves)
    if not bool(torch.isfinite(loss)):
        raise NonFiniteLossError(f"loss evaluated to {float(loss.detach())!r}")
    if not loss.requires_grad:  # constant in the parameters
        return ParameterSet({name: torch.zeros_like(t) for name, t in leaves.items()})
    grads = torch.autograd.grad(loss, list(leaves.tensors.values()), allow_unused=True)
    return ParameterSet(
        {
            name: (g if g is not None else torch.zeros_like(t))
            for (name, t), g in zip(leaves.items(), grads)
        }
    )
