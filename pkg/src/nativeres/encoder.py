"""Desk-scale reference native-resolution vision encoder (numpy, float32).

Pipeline per packed row::

    patches -> linear embed -> L x [pre-RMSNorm, 2D-RoPE attention isolated
    by cu_seqlens, residual; pre-RMSNorm, GELU MLP, residual] -> RMSNorm
    -> split per image -> 2x2 mean-pool merger -> 2-layer GELU projector

2D RoPE layout: each head's dims split into a row half and a column half;
inside a half, consecutive pairs ``(x[2j], x[2j+1])`` rotate by
``p * base ** (-2j / half_dim)`` where ``p`` is the row (resp. column)
coordinate of the patch.

The module verifies contracts (packing isolation, position handling, token
counts); the weights are random and nothing here is trained.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidCuSeqlensError, OddGridError, ValidationError
from .packer import DEFAULT_CAPACITY, PatchSequence, Policy, pack

DTYPE = np.float32


@dataclass(frozen=True)
class EncoderConfig:
    patch_size: int = 14
    in_channels: int = 3
    embed_dim: int = 32
    num_heads: int = 2
    num_layers: int = 2
    mlp_dim: int = 64
    proj_dim: int = 32
    rope_base: float = 10000.0
    merge: int = 2
    seed: int = 0
    eps: float = 1e-6

    def __post_init__(self) -> None:
        if self.embed_dim % self.num_heads:
            raise ValidationError("embed_dim must be divisible by num_heads")
        if self.head_dim % 4:
            raise ValidationError("per-head dim must split into two halves of even size (head_dim % 4 == 0)")
        if min(self.num_layers, self.mlp_dim, self.proj_dim, self.patch_size, self.in_channels) < 0:
            raise ValidationError("encoder sizes must be non-negative")
        if self.merge != 2:
            raise ValidationError("reference encoder implements the 2x2 merger only")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels


@dataclass
class LayerWeights:
    norm1: np.ndarray
    w_qkv: np.ndarray  # (D, 3D)
    b_qkv: np.ndarray
    w_out: np.ndarray  # (D, D)
    b_out: np.ndarray
    norm2: np.ndarray
    w_fc1: np.ndarray  # (D, M)
    b_fc1: np.ndarray
    w_fc2: np.ndarray  # (M, D)
    b_fc2: np.ndarray

    def zero_(self) -> None:
        """Zero every attention/MLP parameter (norm scales untouched)."""
        for name in ("w_qkv", "b_qkv", "w_out", "b_out", "w_fc1", "b_fc1", "w_fc2", "b_fc2"):
            getattr(self, name)[...] = 0


@dataclass
class EncoderWeights:
    w_embed: np.ndarray  # (patch_dim, D)
    b_embed: np.ndarray
    layers: list[LayerWeights]
    final_norm: np.ndarray
    w_proj1: np.ndarray  # (D, proj_dim)
    b_proj1: np.ndarray
    w_proj2: np.ndarray  # (proj_dim, proj_dim)
    b_proj2: np.ndarray
    config: EncoderConfig = field(repr=False)


def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(DTYPE)
    b = rng.uniform(-bound, bound, size=(fan_out,)).astype(DTYPE)
    return w, b


def init_weights(cfg: EncoderConfig) -> EncoderWeights:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; same seed, same bits."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.embed_dim
    w_embed, b_embed = _linear_init(rng, cfg.patch_dim, d)
    layers = []
    for _ in range(cfg.num_layers):
        w_qkv, b_qkv = _linear_init(rng, d, 3 * d)
        w_out, b_out = _linear_init(rng, d, d)
        w_fc1, b_fc1 = _linear_init(rng, d, cfg.mlp_dim)
        w_fc2, b_fc2 = _linear_init(rng, cfg.mlp_dim, d)
        layers.append(
            LayerWeights(
                norm1=np.ones(d, DTYPE),
                w_qkv=w_qkv,
                b_qkv=b_qkv,
                w_out=w_out,
                b_out=b_out,
                norm2=np.ones(d, DTYPE),
                w_fc1=w_fc1,
                b_fc1=b_fc1,
                w_fc2=w_fc2,
                b_fc2=b_fc2,
            )
        )
    w_proj1, b_proj1 = _linear_init(rng, d, cfg.proj_dim)
    w_proj2, b_proj2 = _linear_init(rng, cfg.proj_dim, cfg.proj_dim)
    return EncoderWeights(
        w_embed=w_embed,
        b_embed=b_embed,
        layers=layers,
        final_norm=np.ones(d, DTYPE),
        w_proj1=w_proj1,
        b_proj1=b_proj1,
        w_proj2=w_proj2,
        b_proj2=b_proj2,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Positions


def position_grid(rows: int, cols: int) -> np.ndarray:
    """``(rows * cols, 2)`` integer (row, col) coordinates in raster order."""
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return np.stack([r.ravel(), c.ravel()], axis=1)


def rope_angles(pos: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Rotation angles ``(N, head_dim // 2)``: row-half pairs first, then column-half pairs."""
    pos = np.asarray(pos)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise DimensionMismatchError(f"positions must be (N, 2), got {pos.shape}")
    half_dim = cfg.head_dim // 2
    j = np.arange(half_dim // 2, dtype=np.float64)
    inv_freq = cfg.rope_base ** (-2.0 * j / half_dim)
    p = pos.astype(np.float64)
    return np.concatenate([p[:, :1] * inv_freq, p[:, 1:2] * inv_freq], axis=1)


def apply_rope(x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotate pairs ``(x[..., 2i], x[..., 2i+1])`` of ``x`` of shape ``(..., N, head_dim)`` by ``angles[N, i]``."""
    if x.shape[-1] != 2 * angles.shape[-1] or x.shape[-2] != angles.shape[0]:
        raise DimensionMismatchError(f"cannot apply angles {angles.shape} to {x.shape}")
    cos = np.cos(angles).astype(x.dtype)
    sin = np.sin(angles).astype(x.dtype)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


# ---------------------------------------------------------------------------
# Building blocks


def rms_norm(x: np.ndarray, scale: np.ndarray, eps: float) -> np.ndarray:
    ms = np.mean(x * x, axis=-1, keepdims=True)
    return (x / np.sqrt(ms + eps)).astype(x.dtype) * scale


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    c = np.asarray(math.sqrt(2.0 / math.pi), dtype=x.dtype)
    return 0.5 * x * (1.0 + np.tanh(c * (x + np.asarray(0.044715, dtype=x.dtype) * x**3)))


def _softmax(scores: np.ndarray) -> np.ndarray:
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def _attention(x: np.ndarray, lw: LayerWeights, cfg: EncoderConfig, angles: np.ndarray | None, allowed: np.ndarray | None) -> np.ndarray:
    n, d = x.shape
    h, hd = cfg.num_heads, cfg.head_dim
    qkv = x @ lw.w_qkv + lw.b_qkv
    q, k, v = (qkv[:, i * d : (i + 1) * d].reshape(n, h, hd).transpose(1, 0, 2) for i in range(3))
    if angles is not None:
        q, k = apply_rope(q, angles), apply_rope(k, angles)
    scores = (q @ k.transpose(0, 2, 1)) / np.asarray(math.sqrt(hd), dtype=x.dtype)
    if allowed is not None:
        scores = np.where(allowed, scores, np.asarray(-np.inf, dtype=x.dtype))
    out = _softmax(scores) @ v
    return out.transpose(1, 0, 2).reshape(n, d) @ lw.w_out + lw.b_out


def full_attention(x: np.ndarray, lw: LayerWeights, cfg: EncoderConfig, angles: np.ndarray | None = None) -> np.ndarray:
    """Plain multi-head self-attention over all rows of ``x``."""
    return _attention(x, lw, cfg, angles, None)


def check_cu_seqlens(cu_seqlens: Sequence[int], total: int) -> np.ndarray:
    cu = np.asarray(cu_seqlens)
    if cu.ndim != 1 or cu.size < 2 or cu[0] != 0 or cu[-1] != total or np.any(np.diff(cu) <= 0):
        raise InvalidCuSeqlensError(
            f"cu_seqlens must start at 0, increase strictly and end at {total}; got {list(cu_seqlens)}"
        )
    return cu


def varlen_attention(
    packed: np.ndarray,
    cu_seqlens: Sequence[int],
    lw: LayerWeights,
    cfg: EncoderConfig,
    angles: np.ndarray | None = None,
) -> np.ndarray:
    """Self-attention over a packed row where segment ``i`` only sees ``[cu[i], cu[i+1])``."""
    cu = check_cu_seqlens(cu_seqlens, packed.shape[0])
    segment = np.repeat(np.arange(cu.size - 1), np.diff(cu))
    allowed = segment[:, None] == segment[None, :]
    return _attention(packed, lw, cfg, angles, allowed)


def _block(x: np.ndarray, lw: LayerWeights, cfg: EncoderConfig, angles: np.ndarray, cu_seqlens: Sequence[int] | None) -> np.ndarray:
    h = rms_norm(x, lw.norm1, cfg.eps)
    if cu_seqlens is None:
        x = x + full_attention(h, lw, cfg, angles)
    else:
        x = x + varlen_attention(h, cu_seqlens, lw, cfg, angles)
    h = rms_norm(x, lw.norm2, cfg.eps)
    return x + gelu(h @ lw.w_fc1 + lw.b_fc1) @ lw.w_fc2 + lw.b_fc2


def merge_2x2(features: np.ndarray) -> np.ndarray:
    """Mean-pool a ``(rows, cols, D)`` feature grid over 2x2 blocks -> ``(rows/2, cols/2, D)``."""
    rows, cols, d = features.shape
    if rows % 2 or cols % 2:
        raise OddGridError(f"2x2 merge needs an even grid, got {rows}x{cols}")
    blocks = features.reshape(rows // 2, 2, cols // 2, 2, d)
    return (blocks[:, 0, :, 0] + blocks[:, 0, :, 1] + blocks[:, 1, :, 0] + blocks[:, 1, :, 1]) / np.asarray(4, features.dtype)


def project(x: np.ndarray, w: EncoderWeights) -> np.ndarray:
    return gelu(x @ w.w_proj1 + w.b_proj1) @ w.w_proj2 + w.b_proj2


# ---------------------------------------------------------------------------
# Images


@dataclass(frozen=True)
class ImageInput:
    id: str
    payload: np.ndarray  # (rows * cols, patch_dim), raster order
    grid: tuple[int, int]  # (rows, cols)

    @property
    def length(self) -> int:
        return self.grid[0] * self.grid[1]


def patchify(pixels: np.ndarray, patch_size: int) -> np.ndarray:
    """``(H, W, C)`` pixels -> ``(rows * cols, patch_size**2 * C)`` patch rows in raster order."""
    h, w, c = pixels.shape
    if h % patch_size or w % patch_size:
        raise DimensionMismatchError(f"image {w}x{h} is not a multiple of patch size {patch_size}")
    rows, cols = h // patch_size, w // patch_size
    p = pixels.reshape(rows, patch_size, cols, patch_size, c).transpose(0, 2, 1, 3, 4)
    return p.reshape(rows * cols, patch_size * patch_size * c)


def _validate(img: ImageInput, cfg: EncoderConfig) -> None:
    rows, cols = img.grid
    if rows % 2 or cols % 2:
        raise OddGridError(f"image {img.id!r}: grid {rows}x{cols} is not even in both axes")
    if img.payload.shape != (rows * cols, cfg.patch_dim):
        raise DimensionMismatchError(
            f"image {img.id!r}: payload {img.payload.shape} != ({rows * cols}, {cfg.patch_dim})"
        )


def _head(x: np.ndarray, grid: tuple[int, int], w: EncoderWeights) -> np.ndarray:
    rows, cols = grid
    merged = merge_2x2(x.reshape(rows, cols, -1))
    return project(merged.reshape((rows // 2) * (cols // 2), -1), w)


def encode_image(img: ImageInput, w: EncoderWeights) -> np.ndarray:
    """Unpacked forward of a single image; output ``(rows/2 * cols/2, proj_dim)``."""
    cfg = w.config
    _validate(img, cfg)
    angles = rope_angles(position_grid(*img.grid), cfg)
    x = img.payload.astype(DTYPE) @ w.w_embed + w.b_embed
    for lw in w.layers:
        x = _block(x, lw, cfg, angles, None)
    x = rms_norm(x, w.final_norm, cfg.eps)
    return _head(x, img.grid, w)


def forward(
    images: Sequence[ImageInput],
    w: EncoderWeights,
    capacity: int = DEFAULT_CAPACITY,
    policy: Policy = "first_fit_decreasing",
) -> list[np.ndarray]:
    """Packed forward: images are packed into rows of ``capacity`` patches.

    Returns projected tokens per image, in input order.
    """
    cfg = w.config
    for img in images:
        _validate(img, cfg)
    by_id = {img.id: img for img in images}
    if len(by_id) != len(images):
        raise ValidationError("image ids must be unique")
    batch = pack([PatchSequence(img.id, img.length) for img in images], capacity, policy)

    out: dict[str, np.ndarray] = {}
    for row in batch.bins:
        members = [by_id[i] for i in row.ids]
        cu = row.cu_seqlens
        pos = np.concatenate([position_grid(*m.grid) for m in members], axis=0)
        angles = rope_angles(pos, cfg)
        x = np.concatenate([m.payload.astype(DTYPE) for m in members], axis=0) @ w.w_embed + w.b_embed
        for lw in w.layers:
            x = _block(x, lw, cfg, angles, cu)
        x = rms_norm(x, w.final_norm, cfg.eps)
        for m, a, b in zip(members, cu[:-1], cu[1:]):
            out[m.id] = _head(x[a:b], m.grid, w)
    return [out[img.id] for img in images]
