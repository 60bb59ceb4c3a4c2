"""Desk-scale quantized network components.

QuantLinear fake-quantizes its input activation (dynamic min/max scale) and
its weight (learnable scale, initialized from the initial weight) and keeps
the underlying weight in full precision.  TinyAttention is a single causal
head whose keys and values pass through per-row fake quantization before the
attention product, one scale per (batch, position) row; that per-row choice
is what makes incremental cached decoding reproduce the full-sequence
forward.  TinyLM stacks token + position embeddings, one attention block and
a two-layer SiLU feed-forward, all with residual connections, and an output
projection.  Embedding tables are not quantized.
"""

from __future__ import annotations

import math

import numpy as np

from .quantizer import LearnableScale, QuantConfig, quantize_dynamic
from .tensor import (
    Tensor,
    add_rowvec,
    causal_softmax,
    gather_rows,
    matmul,
    reshape,
    softmax_cross_entropy,
    silu,
    transpose_last2,
)

__all__ = ["QuantLinear", "TinyAttention", "TinyLM"]


class QuantLinear:
    """Linear layer with fake-quantized weights and input activations."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        weight_cfg: QuantConfig | None = None,
        act_cfg: QuantConfig | None = None,
        init_std: float = 0.02,
    ):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(
            rng.normal(0.0, init_std, size=(out_features, in_features)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None
        self.act_cfg = act_cfg
        self.weight_quant = None
        self.act_quant = None
        if weight_cfg is not None:
            if weight_cfg.scale_mode != "learnable":
                raise ValueError("weight quantizer must use a learnable scale")
            self.weight_quant = LearnableScale(weight_cfg)
            self.weight_quant.ensure(self.weight.data)
        if act_cfg is not None and act_cfg.scale_mode == "learnable":
            self.act_quant = LearnableScale(act_cfg)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.in_features:
            raise ValueError(
                f"QuantLinear: input dim {x.data.shape[-1]} != {self.in_features}"
            )
        if self.act_quant is not None:
            x = self.act_quant(x)
        elif self.act_cfg is not None:
            x = quantize_dynamic(x, self.act_cfg)
        w = self.weight_quant(self.weight) if self.weight_quant else self.weight
        lead = x.data.shape[:-1]
        x2 = reshape(x, (-1, self.in_features))
        y = matmul(x2, transpose_last2(w))
        if self.bias is not None:
            y = add_rowvec(y, self.bias)
        return reshape(y, lead + (self.out_features,))

    def named_parameters(self, prefix: str):
        out = [(f"{prefix}.weight", self.weight)]
        if self.bias is not None:
            out.append((f"{prefix}.bias", self.bias))
        if self.weight_quant is not None:
            out.append((f"{prefix}.weight_scale", self.weight_quant.s))
        if self.act_quant is not None and self.act_quant.s is not None:
            out.append((f"{prefix}.act_scale", self.act_quant.s))
        return out

    def named_scales(self, prefix: str):
        out = []
        if self.weight_quant is not None:
            out.append((f"{prefix}.weight_scale", self.weight_quant))
        if self.act_quant is not None and self.act_quant.s is not None:
            out.append((f"{prefix}.act_scale", self.act_quant))
        return out


class TinyAttention:
    """Single-head causal attention with fake-quantized keys and values."""

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        weight_cfg: QuantConfig | None = None,
        act_cfg: QuantConfig | None = None,
        kv_cfg: QuantConfig | None = None,
        init_std: float = 0.02,
    ):
        self.dim = dim
        self.kv_cfg = kv_cfg
        self.kv_quant = None
        if kv_cfg is not None and kv_cfg.scale_mode == "learnable":
            self.kv_quant = (LearnableScale(kv_cfg), LearnableScale(kv_cfg))
        mk = lambda: QuantLinear(
            dim, dim, rng, weight_cfg=weight_cfg, act_cfg=act_cfg, init_std=init_std
        )
        self.wq = mk()
        self.wk = mk()
        self.wv = mk()
        self.wo = mk()
        self.inv_sqrt_d = 1.0 / math.sqrt(dim)

    def _quant_kv(self, k: Tensor, v: Tensor):
        if self.kv_quant is not None:
            return self.kv_quant[0](k), self.kv_quant[1](v)
        if self.kv_cfg is not None:
            return (
                quantize_dynamic(k, self.kv_cfg, per_row=True),
                quantize_dynamic(v, self.kv_cfg, per_row=True),
            )
        return k, v

    def __call__(self, x: Tensor) -> Tensor:
        q = self.wq(x)
        k, v = self._quant_kv(self.wk(x), self.wv(x))
        scores = matmul(q, transpose_last2(k)) * self.inv_sqrt_d
        att = causal_softmax(scores)
        return self.wo(matmul(att, v))

    def decode_step(self, x_t: Tensor, cache: dict) -> Tensor:
        """One decoding step; cache holds quantized K/V rows seen so far."""
        q = self.wq(x_t)
        k, v = self._quant_kv(self.wk(x_t), self.wv(x_t))
        cache["k"] = np.concatenate([cache["k"], k.data], axis=1) if "k" in cache else k.data
        cache["v"] = np.concatenate([cache["v"], v.data], axis=1) if "v" in cache else v.data
        scores = q.data @ np.swapaxes(cache["k"], -1, -2) * self.inv_sqrt_d
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        att = e / e.sum(axis=-1, keepdims=True)
        return self.wo(Tensor(att @ cache["v"]))

    def named_parameters(self, prefix: str):
        out = []
        for name, layer in (
            ("wq", self.wq),
            ("wk", self.wk),
            ("wv", self.wv),
            ("wo", self.wo),
        ):
            out.extend(layer.named_parameters(f"{prefix}.{name}"))
        if self.kv_quant is not None:
            for tag, ls in zip(("k_scale", "v_scale"), self.kv_quant):
                if ls.s is not None:
                    out.append((f"{prefix}.{tag}", ls.s))
        return out

    def named_scales(self, prefix: str):
        out = []
        for name, layer in (
            ("wq", self.wq),
            ("wk", self.wk),
            ("wv", self.wv),
            ("wo", self.wo),
        ):
            out.extend(layer.named_scales(f"{prefix}.{name}"))
        if self.kv_quant is not None:
            for tag, ls in zip(("k_scale", "v_scale"), self.kv_quant):
                if ls.s is not None:
                    out.append((f"{prefix}.{tag}", ls))
        return out


class TinyLM:
    """Character-level language model small enough to gradient-check by hand."""

    def __init__(
        self,
        vocab_size: int,
        dim: int = 64,
        context: int = 64,
        ff_hidden: int | None = None,
        rng: np.random.Generator | None = None,
        weight_cfg: QuantConfig | None = None,
        act_cfg: QuantConfig | None = None,
        kv_cfg: QuantConfig | None = None,
        init_std: float = 0.02,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        ff_hidden = ff_hidden if ff_hidden is not None else 4 * dim
        self.vocab_size = vocab_size
        self.dim = dim
        self.context = context
        self.embed = Tensor(
            rng.normal(0.0, init_std, size=(vocab_size, dim)), requires_grad=True
        )
        self.pos = Tensor(
            rng.normal(0.0, init_std, size=(context, dim)), requires_grad=True
        )
        self.attn = TinyAttention(
            dim, rng, weight_cfg=weight_cfg, act_cfg=act_cfg, kv_cfg=kv_cfg,
            init_std=init_std,
        )
        self.ff1 = QuantLinear(
            dim, ff_hidden, rng, weight_cfg=weight_cfg, act_cfg=act_cfg,
            init_std=init_std,
        )
        self.ff2 = QuantLinear(
            ff_hidden, dim, rng, weight_cfg=weight_cfg, act_cfg=act_cfg,
            init_std=init_std,
        )
        self.out = QuantLinear(
            dim, vocab_size, rng, weight_cfg=weight_cfg, act_cfg=act_cfg,
            init_std=init_std,
        )

    def _check_tokens(self, tokens: np.ndarray):
        tokens = np.asarray(tokens)
        if tokens.ndim != 2:
            raise ValueError(f"tokens must be [batch, time], got {tokens.shape}")
        if tokens.shape[1] > self.context:
            raise ValueError(
                f"sequence length {tokens.shape[1]} exceeds context {self.context}"
            )
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise IndexError(f"token id out of range [0, {self.vocab_size})")
        return tokens

    def logits(self, tokens: np.ndarray) -> Tensor:
        tokens = self._check_tokens(tokens)
        b, t = tokens.shape
        pos_ids = np.broadcast_to(np.arange(t), (b, t))
        x = gather_rows(self.embed, tokens) + gather_rows(self.pos, pos_ids)
        x = x + self.attn(x)
        x = x + self.ff2(silu(self.ff1(x)))
        return self.out(x)

    def loss(self, tokens: np.ndarray, targets: np.ndarray) -> Tensor:
        logits = self.logits(tokens)
        flat = reshape(logits, (-1, self.vocab_size))
        return softmax_cross_entropy(flat, np.asarray(targets).reshape(-1))

    def incremental_logits(self, tokens: np.ndarray) -> np.ndarray:
        """Decode one token at a time through the KV cache; inference only."""
        tokens = self._check_tokens(tokens)
        b, t = tokens.shape
        cache: dict = {}
        steps = []
        for i in range(t):
            x = gather_rows(self.embed, tokens[:, i : i + 1]) + gather_rows(
                self.pos, np.full((b, 1), i)
            )
            x = x + self.attn.decode_step(x, cache)
            x = x + self.ff2(silu(self.ff1(x)))
            steps.append(self.out(x).data)
        return np.concatenate(steps, axis=1)

    def named_parameters(self):
        out = [("embed", self.embed), ("pos", self.pos)]
        out.extend(self.attn.named_parameters("attn"))
        out.extend(self.ff1.named_parameters("ff1"))
        out.extend(self.ff2.named_parameters("ff2"))
        out.extend(self.out.named_parameters("out"))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_scales(self):
        """Learnable quantizer scales, as (name, LearnableScale) pairs."""
        out = []
        out.extend(self.attn.named_scales("attn"))
        out.extend(self.ff1.named_scales("ff1"))
        out.extend(self.ff2.named_scales("ff2"))
        out.extend(self.out.named_scales("out"))
        return out

    def weight_tensors(self):
        """Non-scale parameters, for the pre-quantization init checksum."""
        return [
            (name, p)
            for name, p in self.named_parameters()
            if not name.endswith("_scale")
        ]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())
