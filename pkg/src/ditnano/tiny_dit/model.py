"""Miniature pixel-space DiT with adaLN-Zero blocks and per-layer taps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..arch_plan import FREQ_DIM, DitConfig
from ..errors import NumericError, ShapeError, StateError
from .autograd import Tensor, row_matmul, take_rows

INIT_STD = 0.02

# kind: "normal" (truncated at 2 std), "zeros"
ParamSpec = tuple[str, tuple[int, ...], str]


def param_specs(cfg: DitConfig) -> list[ParamSpec]:
    """Canonical (name, shape, init) list; a pure function of ``cfg``."""
    w, pd, hid = cfg.width, cfg.patch_dim, cfg.mlp_hidden
    specs: list[ParamSpec] = [
        ("x_embed.weight", (pd, w), "normal"),
        ("x_embed.bias", (w,), "zeros"),
        ("pos_embed", (cfg.num_tokens, w), "normal"),
        ("t_embed.fc1.weight", (FREQ_DIM, w), "normal"),
        ("t_embed.fc1.bias", (w,), "zeros"),
        ("t_embed.fc2.weight", (w, w), "normal"),
        ("t_embed.fc2.bias", (w,), "zeros"),
        ("y_embed.weight", (cfg.num_classes + 1, w), "normal"),
    ]
    for i in range(cfg.depth):
        b = f"blocks.{i}"
        specs += [
            (f"{b}.attn.qkv.weight", (w, 3 * w), "normal"),
            (f"{b}.attn.qkv.bias", (3 * w,), "zeros"),
            (f"{b}.attn.proj.weight", (w, w), "normal"),
            (f"{b}.attn.proj.bias", (w,), "zeros"),
            (f"{b}.mlp.fc1.weight", (w, hid), "normal"),
            (f"{b}.mlp.fc1.bias", (hid,), "zeros"),
            (f"{b}.mlp.fc2.weight", (hid, w), "normal"),
            (f"{b}.mlp.fc2.bias", (w,), "zeros"),
            (f"{b}.adaLN.weight", (w, 6 * w), "zeros"),
            (f"{b}.adaLN.bias", (6 * w,), "zeros"),
        ]
    specs += [
        ("final.adaLN.weight", (w, 2 * w), "zeros"),
        ("final.adaLN.bias", (2 * w,), "zeros"),
        ("final.linear.weight", (w, pd), "zeros"),
        ("final.linear.bias", (pd,), "zeros"),
    ]
    return specs


@dataclass
class ModelState:
    cfg: DitConfig
    params: dict[str, Tensor]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def num_scalars(self) -> int:
        return sum(p.size for p in self.params.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def copy(self, requires_grad: bool | None = None) -> "ModelState":
        return ModelState(
            self.cfg,
            {
                k: Tensor(v.data.copy(), requires_grad=v.requires_grad if requires_grad is None else requires_grad)
                for k, v in self.params.items()
            },
        )

    def with_weights(self, arrays: dict[str, np.ndarray], requires_grad: bool = False) -> "ModelState":
        if set(arrays) != set(self.params):
            raise StateError("weight keys do not match the model")
        return ModelState(
            self.cfg,
            {k: Tensor(np.array(arrays[k], dtype=self.dtype), requires_grad=requires_grad) for k in self.params},
        )

    def astype(self, dtype) -> "ModelState":
        return ModelState(
            self.cfg,
            {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad) for k, v in self.params.items()},
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_model(cfg: DitConfig, seed: int = 0, dtype=np.float32, requires_grad: bool = True) -> ModelState:
    """DiT initialization: truncated normals, zero biases, zero adaLN and output layer.

    Draws are made in float64 in canonical order, so a float32 and a float64
    model from the same seed agree to float32 rounding.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in param_specs(cfg):
        if kind == "normal":
            arr = _trunc_normal(rng, shape, INIT_STD)
        else:
            arr = np.zeros(shape)
        params[name] = Tensor(arr.astype(dtype), requires_grad=requires_grad)
    return ModelState(cfg, params)


# ---------------------------------------------------------------- layers
def patchify(x: Tensor, p: int) -> Tensor:
    """[B, C, H, W] -> [B, N, p*p*C], row-major over the patch grid."""
    b, c, h, w = x.shape
    gh, gw = h // p, w // p
    return x.reshape(b, c, gh, p, gw, p).transpose(0, 2, 4, 3, 5, 1).reshape(b, gh * gw, p * p * c)


def unpatchify(tokens: Tensor, p: int, channels: int) -> Tensor:
    """[B, N, p*p*C] -> [B, C, H, W]; inverse of :func:`patchify`."""
    b, n, _ = tokens.shape
    g = math.isqrt(n)
    return tokens.reshape(b, g, g, p, p, channels).transpose(0, 5, 1, 3, 2, 4).reshape(b, channels, g * p, g * p)


def timestep_frequencies(t: np.ndarray, dim: int = FREQ_DIM, max_period: float = 10000.0) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None]
    return np.concatenate([np.cos(args), np.sin(args)], axis=-1)


def _linear(x: Tensor, m: ModelState, prefix: str) -> Tensor:
    return row_matmul(x, m.params[f"{prefix}.weight"]) + m.params[f"{prefix}.bias"]


def canonical_order(tokens: np.ndarray) -> np.ndarray:
    """Per batch element, the token indices sorted by token content. [B, N]"""
    return np.stack([np.lexsort(t.T[::-1]) for t in tokens])


def _modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return x * (scale + 1.0) + shift


def class_indices(cfg: DitConfig, class_id, batch: int) -> np.ndarray:
    """Map class ids to label-table rows; ``None`` or -1 selects the null row."""
    null = cfg.num_classes
    if class_id is None:
        ids = [None] * batch
    elif isinstance(class_id, (int, np.integer)):
        ids = [int(class_id)] * batch
    else:
        ids = list(class_id)
        if len(ids) != batch:
            raise ShapeError(f"{len(ids)} class ids for a batch of {batch}")
    out = np.empty(batch, dtype=np.int64)
    for i, c in enumerate(ids):
        if c is None or int(c) == -1:
            out[i] = null
        elif 0 <= int(c) < cfg.num_classes:
            out[i] = int(c)
        else:
            raise ShapeError(f"class id {c} outside [0, {cfg.num_classes})")
    return out


def condition(m: ModelState, class_id, t_const: float = 0.0, batch: int = 1) -> Tensor:
    """Conditioning vector: timestep embedding of ``t_const`` plus label embedding. [B, w]"""
    freq = timestep_frequencies(np.full(batch, t_const)).astype(m.dtype)
    t_emb = _linear(_linear(Tensor(freq), m, "t_embed.fc1").silu(), m, "t_embed.fc2")
    y_emb = take_rows(m.params["y_embed.weight"], class_indices(m.cfg, class_id, batch))
    return t_emb + y_emb


def attention(x: Tensor, m: ModelState, prefix: str) -> Tensor:
    cfg = m.cfg
    b, n, w = x.shape
    h, dh = cfg.heads, cfg.head_dim
    qkv = _linear(x, m, f"{prefix}.qkv").reshape(b, n, 3, h, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    # Keys and values are visited in content order, so every reduction over
    # the key axis sees the same operands in the same order under any token
    # permutation: the block is exactly permutation equivariant.
    order = canonical_order(x.data)[:, None, :]
    bi, hi = np.arange(b)[:, None, None], np.arange(h)[None, :, None]
    k, v = k[bi, hi, order], v[bi, hi, order]
    attn = (row_matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))).softmax(axis=-1)
    out = row_matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, n, w)
    return _linear(out, m, f"{prefix}.proj")


def dit_block(x: Tensor, c_act: Tensor, m: ModelState, i: int) -> Tensor:
    p = f"blocks.{i}"
    b, _, w = x.shape
    mod = _linear(c_act, m, f"{p}.adaLN").reshape(b, 1, 6 * w)
    shift1, scale1, gate1, shift2, scale2, gate2 = mod.chunk(6, axis=-1)
    x = x + gate1 * attention(_modulate(x.layer_norm(), shift1, scale1), m, f"{p}.attn")
    hidden = _linear(_modulate(x.layer_norm(), shift2, scale2), m, f"{p}.mlp.fc1").gelu()
    x = x + gate2 * _linear(hidden, m, f"{p}.mlp.fc2")
    return x


@dataclass
class ForwardTrace:
    """Output image, every block's token output, and the conditioning used."""

    image: Tensor
    taps: list[Tensor]
    cond: Tensor
    batched: bool = True

    def tap(self, layer: int) -> Tensor:
        """Token output of 1-indexed ``layer``."""
        if not 1 <= layer <= len(self.taps):
            raise IndexError(f"layer {layer} outside 1..{len(self.taps)}")
        return self.taps[layer - 1]


def _as_batch(m: ModelState, z) -> tuple[Tensor, bool]:
    cfg = m.cfg
    if not isinstance(z, Tensor):
        z = Tensor(np.asarray(z, dtype=m.dtype))
    elif z.dtype != m.dtype:
        z = Tensor(z.data.astype(m.dtype), requires_grad=z.requires_grad) if not z.requires_grad else z
    want = (cfg.in_channels, cfg.image_size, cfg.image_size)
    if z.ndim == 3 and z.shape == want:
        return z.reshape(1, *want), False
    if z.ndim == 4 and z.shape[1:] == want:
        return z, True
    raise ShapeError(f"expected input of shape {want} or [B, *{want}], got {z.shape}")


def embed(m: ModelState, z: Tensor) -> Tensor:
    """Patch embedding plus positional embedding. [B, N, w]"""
    tokens = patchify(z, m.cfg.patch_size)
    return _linear(tokens, m, "x_embed") + m.params["pos_embed"]


def forward(m: ModelState, z, class_id=None, t_const: float = 0.0) -> ForwardTrace:
    """One-step student pass on image-shaped noise ``z``.

    ``z`` may be a single image [C, H, W] or a batch [B, C, H, W]; a ``None``
    class selects the null (unconditional) label row.
    """
    zb, batched = _as_batch(m, z)
    batch = zb.shape[0]
    cond = condition(m, class_id, t_const, batch)
    c_act = cond.silu()
    x = embed(m, zb)
    taps = []
    for i in range(m.cfg.depth):
        x = dit_block(x, c_act, m, i)
        taps.append(x)
    image = _decode(m, x, cond)
    if not batched:
        cfg = m.cfg
        image = image.reshape(cfg.in_channels, cfg.image_size, cfg.image_size)
        taps = [t.reshape(cfg.num_tokens, cfg.width) for t in taps]
    return ForwardTrace(image=image, taps=taps, cond=cond, batched=batched)


def _decode(m: ModelState, tokens: Tensor, cond: Tensor) -> Tensor:
    b, _, w = tokens.shape
    mod = _linear(cond.silu(), m, "final.adaLN").reshape(b, 1, 2 * w)
    shift, scale = mod.chunk(2, axis=-1)
    out = _linear(_modulate(tokens.layer_norm(), shift, scale), m, "final.linear")
    return unpatchify(out, m.cfg.patch_size, m.cfg.in_channels)


def decode_head(m: ModelState, tokens: Tensor, cond: Tensor) -> Tensor:
    """Final adaLN + linear + unpatchify; shared by the output and every tap.

    ``tokens`` is [N, w] or [B, N, w]; ``cond`` is the trace's conditioning
    vector [B, w].
    """
    cfg = m.cfg
    want = (cfg.num_tokens, cfg.width)
    if tokens.shape == want:
        out = _decode(m, tokens.reshape(1, *want), cond)
        return out.reshape(cfg.in_channels, cfg.image_size, cfg.image_size)
    if tokens.ndim == 3 and tokens.shape[1:] == want:
        return _decode(m, tokens, cond)
    raise ShapeError(f"expected tokens of shape {want} or [B, *{want}], got {tokens.shape}")


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of scalar ``loss`` for every tensor in ``params``.

    Weights the loss does not reach get zero gradients.
    """
    value = loss.data
    if value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(value).all():
        raise NumericError(f"loss is not finite: {float(value)}")
    for p in params.values():
        p.grad = None
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for k, p in params.items():
        grads[k] = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.grad = None
    return grads


def backward(loss: Tensor, m: ModelState) -> dict[str, np.ndarray]:
    return gradients(loss, m.params)


def cfg_guide(cond, uncond, scale: float):
    """Classifier-free guidance ``uncond + scale * (cond - uncond)``.

    Evaluated as ``scale*cond + (1-scale)*uncond`` so that scale 1 and 0
    return ``cond`` and ``uncond`` exactly.
    """
    cs, us = getattr(cond, "shape", np.shape(cond)), getattr(uncond, "shape", np.shape(uncond))
    if cs != us:
        raise ShapeError(f"cond {cs} and uncond {us} differ")
    return cond * scale + uncond * (1.0 - scale)


@dataclass
class EmaState:
    shadow: dict[str, np.ndarray]
    decay: float = 0.9999

    @classmethod
    def from_model(cls, m: ModelState, decay: float = 0.9999) -> "EmaState":
        return cls({k: v.data.copy() for k, v in m.params.items()}, decay)


def ema_update(ema: EmaState, m: ModelState) -> EmaState:
    """``shadow <- decay * shadow + (1 - decay) * live`` for every scalar."""
    if set(ema.shadow) != set(m.params):
        missing = sorted(set(m.params) ^ set(ema.shadow))
        raise StateError(f"EMA and model keys differ: {missing[:5]}")
    d = ema.decay
    return EmaState({k: d * s + (1.0 - d) * m.params[k].data for k, s in ema.shadow.items()}, d)
