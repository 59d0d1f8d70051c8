"""Networks: text encoder, condition encoder with zero-initialized additive
injection, the denoising U-Net, and classifier-free guided prediction.

All tensors are torch, batch-first. Images are (B, 3, H, W) in [0, 1];
conditions are (B, 4, H, W); timesteps are 1-based integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .text import MAX_TOKENS, VOCAB_SIZE, Prompt


class NonFiniteActivation(RuntimeError):
    """Raised instead of silently propagating NaN/Inf out of the denoiser."""


@dataclass
class ModelConfig:
    image_size: int = 64
    base_width: int = 64
    channel_mults: tuple[int, ...] = (1, 2, 4)
    d_text: int = 128
    text_layers: int = 2
    attn_heads: int = 4
    time_dim: int = 256
    vocab_size: int = VOCAB_SIZE
    max_tokens: int = MAX_TOKENS

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "base_width": self.base_width,
            "channel_mults": list(self.channel_mults),
            "d_text": self.d_text,
            "text_layers": self.text_layers,
            "attn_heads": self.attn_heads,
            "time_dim": self.time_dim,
            "vocab_size": self.vocab_size,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        return cls(**d)


@dataclass
class TextEmbedding:
    vectors: torch.Tensor      # (B, max_tokens, d_text)
    pad_mask: torch.Tensor     # (B, max_tokens) bool, True = padding
    pooled: torch.Tensor       # (B, d_text) mean over valid positions


class TextEncoder(nn.Module):
    """Token + position embeddings and a small self-attention stack.

    The NULL (empty) prompt maps to a dedicated learned unconditional
    sequence that bypasses token embedding entirely.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size, cfg.d_text, padding_idx=0)
        self.pos_emb = nn.Parameter(torch.zeros(cfg.max_tokens, cfg.d_text))
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_text, nhead=cfg.attn_heads, dim_feedforward=2 * cfg.d_text,
            batch_first=True, dropout=0.0)
        self.layers = nn.TransformerEncoder(layer, num_layers=cfg.text_layers)
        self.uncond_seq = nn.Parameter(torch.randn(cfg.max_tokens, cfg.d_text) * 0.02)

    def forward(self, prompts: Sequence[Prompt]) -> TextEmbedding:
        cfg = self.cfg
        device = self.pos_emb.device
        ids = torch.zeros(len(prompts), cfg.max_tokens, dtype=torch.long, device=device)
        null = torch.zeros(len(prompts), dtype=torch.bool, device=device)
        for b, p in enumerate(prompts):
            if p.is_null:
                null[b] = True
            else:
                ids[b, :len(p.tokens)] = torch.tensor(p.tokens, dtype=torch.long,
                                                      device=device)
        pad = ids == 0
        # NULL rows attend over the full unconditional sequence.
        pad = pad & ~null[:, None]
        x = self.token_emb(ids) + self.pos_emb[None]
        x = torch.where(null[:, None, None], self.uncond_seq[None], x)
        x = self.layers(x, src_key_padding_mask=pad)
        valid = (~pad).float()[:, :, None]
        pooled = (x * valid).sum(dim=1) / valid.sum(dim=1).clamp(min=1.0)
        return TextEmbedding(vectors=x, pad_mask=pad, pooled=pooled)


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=torch.float32,
                                              device=t.device) / half)
        args = t.float()[:, None] * freqs[None]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, ch_out)
        self.norm2 = nn.GroupNorm(8, ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1)
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x, t_emb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(torch.nn.functional.silu(t_emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttentionBlock(nn.Module):
    """Spatial tokens attend to the text sequence; residual connection."""

    def __init__(self, ch: int, d_text: int, heads: int):
        super().__init__()
        self.norm = nn.GroupNorm(8, ch)
        self.attn = nn.MultiheadAttention(embed_dim=ch, num_heads=heads,
                                          kdim=d_text, vdim=d_text, batch_first=True)

    def forward(self, x, text: TextEmbedding):
        b, c, h, w = x.shape
        q = self.norm(x).flatten(2).transpose(1, 2)          # (B, HW, C)
        out, _ = self.attn(q, text.vectors, text.vectors,
                           key_padding_mask=text.pad_mask, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


def zero_conv(ch_in: int, ch_out: int) -> nn.Conv2d:
    conv = nn.Conv2d(ch_in, ch_out, 1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


class ConditionEncoder(nn.Module):
    """Conv encoder over the 4-channel condition producing one additive
    injection per denoiser encoder resolution, through zero-initialized
    projections (zero contribution at initialization)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        chans = [cfg.base_width * m for m in cfg.channel_mults]
        self.stem = nn.Conv2d(4, chans[0], 3, padding=1)
        blocks, zeros = [], []
        for i, ch in enumerate(chans):
            ch_in = chans[max(i - 1, 0)]
            blocks.append(nn.Sequential(
                nn.Conv2d(ch_in, ch, 3, padding=1, stride=1 if i == 0 else 2),
                nn.SiLU(),
                nn.Conv2d(ch, ch, 3, padding=1),
                nn.SiLU(),
            ))
            zeros.append(zero_conv(ch, ch))
        self.blocks = nn.ModuleList(blocks)
        self.zeros = nn.ModuleList(zeros)

    def forward(self, cond: torch.Tensor) -> list[torch.Tensor]:
        if cond.shape[1] != 4:
            raise ValueError(f"condition must have 4 channels, got {cond.shape[1]}")
        h = self.stem(cond)
        feats = []
        for block, zc in zip(self.blocks, self.zeros):
            h = block(h)
            feats.append(zc(h))
        return feats


class DenoiserUNet(nn.Module):
    """Small U-Net: 3 resolutions, cross-attention to text at each encoder
    level, additive condition injection at each encoder level."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        chans = [cfg.base_width * m for m in cfg.channel_mults]
        self.time_sin = SinusoidalTimeEmbedding(cfg.base_width)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.base_width, cfg.time_dim), nn.SiLU(),
            nn.Linear(cfg.time_dim, cfg.time_dim))
        self.conv_in = nn.Conv2d(3, chans[0], 3, padding=1)

        self.down_res = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsample = nn.ModuleList()
        for i, ch in enumerate(chans):
            ch_in = chans[max(i - 1, 0)]
            self.down_res.append(ResBlock(ch_in if i == 0 else ch, ch, cfg.time_dim))
            self.down_attn.append(CrossAttentionBlock(ch, cfg.d_text, cfg.attn_heads))
            if i + 1 < len(chans):
                self.downsample.append(nn.Conv2d(ch, chans[i + 1], 3, stride=2, padding=1))

        self.mid1 = ResBlock(chans[-1], chans[-1], cfg.time_dim)
        self.mid2 = ResBlock(chans[-1], chans[-1], cfg.time_dim)

        self.up_conv = nn.ModuleList()
        self.up_res = nn.ModuleList()
        for i in range(len(chans) - 1, 0, -1):
            self.up_conv.append(nn.Conv2d(chans[i], chans[i - 1], 3, padding=1))
            self.up_res.append(ResBlock(2 * chans[i - 1], chans[i - 1], cfg.time_dim))

        self.out_norm = nn.GroupNorm(8, chans[0])
        self.conv_out = nn.Conv2d(chans[0], 3, 3, padding=1)

    def forward(self, x, t, text: TextEmbedding, cond_feats: list[torch.Tensor]):
        t_emb = self.time_mlp(self.time_sin(t).to(x.dtype))
        h = self.conv_in(x)
        skips = []
        for i in range(len(self.down_res)):
            h = self.down_res[i](h, t_emb)
            h = self.down_attn[i](h, text)
            if cond_feats is not None:
                h = h + cond_feats[i]
            skips.append(h)
            if i < len(self.downsample):
                h = self.downsample[i](h)
        h = self.mid1(h, t_emb)
        h = self.mid2(h, t_emb)
        for j in range(len(self.up_res)):
            h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = self.up_conv[j](h)
            h = torch.cat([h, skips[-(j + 2)]], dim=1)
            h = self.up_res[j](h, t_emb)
        return self.conv_out(nn.functional.silu(self.out_norm(h)))


class EditorModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.text_encoder = TextEncoder(cfg)
        self.cond_encoder = ConditionEncoder(cfg)
        self.unet = DenoiserUNet(cfg)


@dataclass
class ModelState:
    """Trainable parameters plus training metadata."""
    model: EditorModel
    config: dict = field(default_factory=dict)
    step: int = 0

    @property
    def model_config(self) -> ModelConfig:
        return self.model.cfg


def init_state(model_cfg: ModelConfig, train_config: dict | None = None,
               seed: int = 0) -> ModelState:
    torch.manual_seed(seed)
    model = EditorModel(model_cfg)
    cfg = dict(train_config or {})
    cfg["model"] = model_cfg.to_dict()
    return ModelState(model=model, config=cfg, step=0)


def encode_text(prompts: Sequence[Prompt], state: ModelState) -> TextEmbedding:
    return state.model.text_encoder(prompts)


def encode_condition(cond: torch.Tensor, state: ModelState) -> list[torch.Tensor]:
    return state.model.cond_encoder(cond)


def predict_noise(x_t: torch.Tensor, t: torch.Tensor, text: TextEmbedding,
                  cond_feats: list[torch.Tensor], state: ModelState) -> torch.Tensor:
    out = state.model.unet(x_t, t, text, cond_feats)
    if not torch.isfinite(out).all():
        raise NonFiniteActivation(
            f"denoiser produced non-finite values at step={state.step}, t={t.tolist()}")
    return out


def predict_noise_cfg(x_t: torch.Tensor, t: torch.Tensor, prompt: Prompt,
                      cond: torch.Tensor, state: ModelState,
                      scale: float) -> torch.Tensor:
    """Classifier-free guidance: uncond + scale * (cond - uncond).

    The image condition is kept in both branches; only the text drops to
    the NULL prompt in the unconditional branch.
    """
    if scale < 0:
        raise ValueError("guidance scale must be >= 0")
    from .text import NULL_PROMPT
    b = x_t.shape[0]
    cond_feats = encode_condition(cond, state)
    eps_c = predict_noise(x_t, t, encode_text([prompt] * b, state), cond_feats, state)
    eps_u = predict_noise(x_t, t, encode_text([NULL_PROMPT] * b, state), cond_feats, state)
    return eps_u + scale * (eps_c - eps_u)


def image_to_tensor(img: np.ndarray) -> torch.Tensor:
    """HxWx3 [0,1] numpy -> (1,3,H,W) float32 torch."""
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1,3,H,W) or (3,H,W) torch -> HxWx3 float32 numpy."""
    if t.dim() == 4:
        t = t[0]
    return t.detach().permute(1, 2, 0).cpu().numpy().astype(np.float32)
