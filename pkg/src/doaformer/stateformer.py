"""Sequence model composition and the frame-wise direction head.

One layer applies, in order:

    z1 = z  + 1/2 * ffn_expand(z)
    z2 = dytanh(z1 + bimamba(z1))
    z3 = z2 + 1/2 * ffn_squeeze(z2)
    z4 = z3 + mhsa(z3)
    z5 = z4 + shift_conv(z4)
    z6 = z5 + 1/2 * ffn_expand(z5)
    out = affine layer norm(z6)

The model is frontend -> gating -> projection -> learned positional embedding
-> n layers -> linear head emitting one unit 3-vector per frame per track.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .bimamba import BiMambaPlus
from .fa_block import FaBlock, ResNetFrontend, ToSequence, fa_gate_param_count
from .numerics import Module, Tensor, param, sqrt, tanh
from .numerics.module import Linear
from .numerics.tensor import layer_norm, narrow, reshape, sum_
from .seconformer import (
    ConvModule,
    FeedForwardExpand,
    FeedForwardSqueeze,
    MultiHeadSelfAttention,
    ShiftSpec,
)


@dataclass
class StateformerConfig:
    width: int = 96
    layers: int = 4
    heads: int = 4
    conv_kernel: int = 15
    shift_enabled: bool = True
    dropout: float = 0.1
    max_sources: int = 2
    ssm_state: int = 16
    ssm_expand: int = 2
    fa_reduction: int = 4
    frontend_channels: tuple = (32, 64, 128)
    feature_planes: int = 4
    freq_bins: int = 256
    max_len: int = 512
    bimamba_first_layer_only: bool = False

    def __post_init__(self):
        if self.width % 8 or self.width % self.heads:
            raise ValueError(
                f"width {self.width} must be divisible by 8 and by heads {self.heads}"
            )
        if self.layers < 1:
            raise ValueError("need at least one layer")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StateformerConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for i, line in enumerate(text.splitlines()):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, value = line.partition(" ")
            if name not in known:
                raise ValueError(f"unknown config field {name!r} (line {i + 1})")
            kwargs[name] = _parse_field(known[name].type, value.strip())
        return cls(**kwargs)


def _parse_field(type_name, value):
    if type_name == "bool":
        return value in ("True", "true", "1")
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    if type_name == "tuple":
        return tuple(int(x) for x in value.split(","))
    return value


DESK_CONFIG = StateformerConfig(
    width=32, layers=2, heads=2, conv_kernel=7,
    frontend_channels=(8, 16, 32), max_len=256,
)

PRESETS = {"full": StateformerConfig(), "desk": DESK_CONFIG}


class DyTanh(Module):
    """gamma * tanh(alpha * x) + beta; a norm-free squashing stage."""

    def __init__(self, width, alpha0=0.5):
        super().__init__()
        self.alpha = param(np.array([alpha0]))
        self.gamma = param(np.ones(width))
        self.beta = param(np.zeros(width))

    def forward(self, x):
        return tanh(x * self.alpha) * self.gamma + self.beta


class OutputNorm(Module):
    """Affine layer norm over channels."""

    def __init__(self, width):
        super().__init__()
        self.gamma = param(np.ones(width))
        self.beta = param(np.zeros(width))

    def forward(self, x):
        return layer_norm(x) * self.gamma + self.beta


class StateformerLayer(Module):
    def __init__(self, rng, cfg: StateformerConfig, use_bimamba=True):
        super().__init__()
        d = cfg.width
        self.ffn1 = FeedForwardExpand(rng.child("ffn1"), d, cfg.dropout)
        self.bimamba = (
            BiMambaPlus(rng.child("bimamba"), d, cfg.ssm_expand, cfg.ssm_state)
            if use_bimamba
            else None
        )
        self.dytanh = DyTanh(d) if use_bimamba else None
        self.ffn_s = FeedForwardSqueeze(rng.child("ffn_s"), d)
        self.mhsa = MultiHeadSelfAttention(rng.child("mhsa"), d, cfg.heads)
        self.conv = ConvModule(
            rng.child("conv"), d, ShiftSpec(cfg.conv_kernel, cfg.shift_enabled), cfg.dropout
        )
        self.ffn2 = FeedForwardExpand(rng.child("ffn2"), d, cfg.dropout)
        self.out_norm = OutputNorm(d)

    def forward(self, z):
        z = z + 0.5 * self.ffn1(z)
        if self.bimamba is not None:
            z = self.dytanh(z + self.bimamba(z))
        z = z + 0.5 * self.ffn_s(z)
        z = z + self.mhsa(z)
        z = z + self.conv(z)
        z = z + 0.5 * self.ffn2(z)
        return self.out_norm(z)


class DoaHead(Module):
    """Linear map to max_sources 3-vectors per frame, normalized to unit length."""

    def __init__(self, rng, width, max_sources=2, eps=1e-8):
        super().__init__()
        self.max_sources = max_sources
        self.proj = Linear(rng.child("proj"), width, 3 * max_sources)
        self._eps = eps

    def forward(self, seq):
        ln = seq.shape[0]
        raw = reshape(self.proj(seq), (ln, self.max_sources, 3))
        norm = sqrt(sum_(raw * raw, axis=2, keepdims=True) + self._eps**2)
        return raw / norm


class StateformerModel(Module):
    """Feature planes (2C, F, T) in, unit direction tracks (T, S, 3) out."""

    def __init__(self, cfg: StateformerConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.frontend = ResNetFrontend(
            rng.child("frontend"), cfg.feature_planes, cfg.frontend_channels
        )
        self.fa = FaBlock(rng.child("fa"), self.frontend.out_channels, cfg.fa_reduction)
        freq_out = cfg.freq_bins // 64
        self.to_seq = ToSequence(
            rng.child("to_seq"), self.frontend.out_channels, freq_out, cfg.width
        )
        self.pos_emb = param(rng.child("pos").normal(0.0, 0.02, (cfg.max_len, cfg.width)))
        self.layers = [
            StateformerLayer(
                rng.child(f"layer{i}"),
                cfg,
                use_bimamba=(i == 0 or not cfg.bimamba_first_layer_only),
            )
            for i in range(cfg.layers)
        ]
        self.head = DoaHead(rng.child("head"), cfg.width, cfg.max_sources)

    def encode(self, feat) -> Tensor:
        feat = feat if isinstance(feat, Tensor) else Tensor(feat)
        x = self.fa(self.frontend(feat))
        seq = self.to_seq(x)
        ln = seq.shape[0]
        if ln > self.cfg.max_len:
            raise ValueError(f"sequence of {ln} frames exceeds max_len {self.cfg.max_len}")
        return seq + narrow(self.pos_emb, (slice(0, ln), slice(None)))

    def forward(self, feat) -> Tensor:
        seq = self.encode(feat)
        for layer in self.layers:
            seq = layer(seq)
        return self.head(seq)

    def param_groups(self):
        """Ordered name -> parameter count per top-level component."""
        groups = {}
        for name, p in self.named_parameters():
            top = name.split(".")[0]
            if top == "layers":
                top = "layers." + name.split(".")[1]
            groups[top] = groups.get(top, 0) + p.size
        return groups


def build_model(cfg: StateformerConfig, seed: int) -> StateformerModel:
    from .numerics import Rng

    return StateformerModel(cfg, Rng(seed).child("model"))
