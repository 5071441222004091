"""Graph transformer networks: encoder, decoder, and bridge drift model.

All three share one trunk: per-head node attention whose scores are
modulated multiplicatively and additively by edge embeddings, edge
embeddings updated from the modulated attention scores, and a global
feature updated from pooled node/edge states and injected back through
feature-wise scale-shift. Every block commutes with node permutations.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NumericError, PreconditionError
from .graphs import GraphBatch

ATTN_MASK_VALUE = -1e9


@dataclass(frozen=True)
class GraphTransformerConfig:
    num_layers: int = 2
    num_heads: int = 4
    hidden_x: int = 64
    hidden_e: int = 32
    hidden_y: int = 32
    latent_f: int = 6
    dx: int = 1
    de: int = 2
    in_x: int = 1
    in_y: int = 9
    time_dim: int = 0

    def __post_init__(self):
        if self.hidden_x % self.num_heads != 0:
            raise PreconditionError("hidden_x must be divisible by num_heads")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: int(v) for k, v in d.items()})


class ParameterStore:
    """Named parameter tensors with gradient buffers and Adam state."""

    def __init__(self, params: dict):
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.step_count = 0

    def tensors(self) -> dict:
        """Fresh leaf tensors viewing the current parameter values."""
        return {k: ad.parameter(v) for k, v in self.params.items()}

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def collect_grads(self, tensors: dict):
        """Pull gradients out of a backward pass; missing grads count as zero."""
        for k, t in tensors.items():
            self.grads[k] = (t.grad.copy() if t.grad is not None
                             else np.zeros_like(self.params[k]))

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Standard Adam update with bias correction."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for k, p in self.params.items():
            g = self.grads[k]
            m = self.adam_m[k]
            v = self.adam_v[k]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
            if not np.all(np.isfinite(p)):
                raise NumericError(f"non-finite parameter '{k}' after Adam step {t}")

    def copy(self) -> "ParameterStore":
        out = ParameterStore({k: v.copy() for k, v in self.params.items()})
        out.grads = {k: v.copy() for k, v in self.grads.items()}
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.step_count = self.step_count
        return out

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for k in sorted(self.params):
            digest.update(k.encode())
            digest.update(np.ascontiguousarray(self.params[k]).tobytes())
        return digest.hexdigest()


# -- initialization -------------------------------------------------------

def _linear_init(rng, fan_in, fan_out, zero=False):
    if zero:
        return np.zeros((fan_in, fan_out)), np.zeros(fan_out)
    s = 1.0 / math.sqrt(fan_in)
    w = rng.uniform(-s, s, size=(fan_in, fan_out))
    b = rng.uniform(-s, s, size=fan_out)
    return w, b


def _add_linear(params, rng, name, fan_in, fan_out, zero=False):
    w, b = _linear_init(rng, fan_in, fan_out, zero=zero)
    params[name + ".W"] = w
    params[name + ".b"] = b


def _add_layernorm(params, name, dim):
    params[name + ".g"] = np.ones(dim)
    params[name + ".b"] = np.zeros(dim)


def _add_trunk(params, rng, cfg: GraphTransformerConfig):
    hx, he, hy, heads = cfg.hidden_x, cfg.hidden_e, cfg.hidden_y, cfg.num_heads
    for layer in range(cfg.num_layers):
        p = f"layers.{layer}."
        for name in ("q", "k", "v", "out"):
            _add_linear(params, rng, p + "attn." + name, hx, hx)
        _add_linear(params, rng, p + "attn.e_mul", he, heads)
        _add_linear(params, rng, p + "attn.e_add", he, heads)
        _add_linear(params, rng, p + "edge.out", heads, he)
        _add_linear(params, rng, p + "film.x_scale", hy, hx)
        _add_linear(params, rng, p + "film.x_shift", hy, hx)
        _add_linear(params, rng, p + "film.e_scale", hy, he)
        _add_linear(params, rng, p + "film.e_shift", hy, he)
        _add_linear(params, rng, p + "x_ff.1", hx, 2 * hx)
        _add_linear(params, rng, p + "x_ff.2", 2 * hx, hx)
        _add_linear(params, rng, p + "e_ff.1", he, 2 * he)
        _add_linear(params, rng, p + "e_ff.2", 2 * he, he)
        _add_linear(params, rng, p + "y_upd", hy + hx + he, hy)
        _add_linear(params, rng, p + "y_ff.1", hy, 2 * hy)
        _add_linear(params, rng, p + "y_ff.2", 2 * hy, hy)
        for name in ("ln_x1", "ln_x2"):
            _add_layernorm(params, p + name, hx)
        for name in ("ln_e1", "ln_e2"):
            _add_layernorm(params, p + name, he)
        for name in ("ln_y1", "ln_y2"):
            _add_layernorm(params, p + name, hy)


def init_encoder_params(cfg: GraphTransformerConfig, seed: int) -> ParameterStore:
    rng = np.random.default_rng(seed)
    params = {}
    _add_linear(params, rng, "embed.x", cfg.in_x, cfg.hidden_x)
    _add_linear(params, rng, "embed.e", cfg.de, cfg.hidden_e)
    _add_linear(params, rng, "embed.y", cfg.in_y, cfg.hidden_y)
    _add_trunk(params, rng, cfg)
    _add_linear(params, rng, "head.z", cfg.hidden_x, cfg.latent_f)
    return ParameterStore(params)


def init_decoder_params(cfg: GraphTransformerConfig, seed: int) -> ParameterStore:
    rng = np.random.default_rng(seed)
    params = {}
    _add_linear(params, rng, "embed.x", cfg.latent_f, cfg.hidden_x)
    _add_linear(params, rng, "embed.e", 1, cfg.hidden_e)
    _add_linear(params, rng, "embed.y", cfg.latent_f, cfg.hidden_y)
    _add_trunk(params, rng, cfg)
    _add_linear(params, rng, "head.x", cfg.hidden_x, cfg.dx)
    _add_linear(params, rng, "head.e", cfg.hidden_e, cfg.de)
    return ParameterStore(params)


def init_drift_params(cfg: GraphTransformerConfig, seed: int) -> ParameterStore:
    if cfg.time_dim <= 0:
        raise PreconditionError("drift net requires time_dim > 0")
    rng = np.random.default_rng(seed)
    params = {}
    _add_linear(params, rng, "embed.x", cfg.latent_f, cfg.hidden_x)
    _add_linear(params, rng, "embed.e", 1, cfg.hidden_e)
    _add_linear(params, rng, "embed.y", cfg.latent_f + cfg.time_dim, cfg.hidden_y)
    _add_trunk(params, rng, cfg)
    # zero-initialized head keeps the learned drift small early in training
    _add_linear(params, rng, "head.z", cfg.hidden_x, cfg.latent_f, zero=True)
    return ParameterStore(params)


# -- forward passes -------------------------------------------------------

def _linear(params, name, x):
    return ad.matmul(x, params[name + ".W"]) + params[name + ".b"]


def _ff(params, name, x):
    return _linear(params, name + ".2", ad.gelu(_linear(params, name + ".1", x)))


def _layer_norm(params, name, x):
    return ad.layer_norm(x, params[name + ".g"], params[name + ".b"])


def _check_finite(tensor, layer, what):
    if not np.all(np.isfinite(tensor.value)):
        raise NumericError(f"non-finite {what} activations in layer {layer}")


def _trunk(params, cfg: GraphTransformerConfig, x, e, y, mask):
    """Run the transformer layers; returns final (x, e, y) states."""
    b, n = mask.shape
    heads = cfg.num_heads
    dk = cfg.hidden_x // heads
    node_mask = ad.constant(mask.astype(np.float64)[:, :, None])
    pair = mask.astype(np.float64)
    pair = pair[:, :, None] * pair[:, None, :]
    pair_mask = ad.constant(pair[:, :, :, None])
    attn_bias = ad.constant(
        (1.0 - mask.astype(np.float64))[:, None, None, :] * ATTN_MASK_VALUE)
    flat_pair = pair.reshape(b, n * n, 1)

    for layer in range(cfg.num_layers):
        p = f"layers.{layer}."
        q = ad.reshape(_linear(params, p + "attn.q", x), (b, n, heads, dk))
        k = ad.reshape(_linear(params, p + "attn.k", x), (b, n, heads, dk))
        v = ad.reshape(_linear(params, p + "attn.v", x), (b, n, heads, dk))
        q = ad.transpose(q, (0, 2, 1, 3))
        k = ad.transpose(k, (0, 2, 3, 1))
        v = ad.transpose(v, (0, 2, 1, 3))
        scores = ad.matmul(q, k) * (1.0 / math.sqrt(dk))

        e_mul = ad.transpose(_linear(params, p + "attn.e_mul", e), (0, 3, 1, 2))
        e_add = ad.transpose(_linear(params, p + "attn.e_add", e), (0, 3, 1, 2))
        scores = scores * (1.0 + e_mul) + e_add

        attn = ad.softmax(scores + attn_bias, axis=-1)
        ctx = ad.matmul(attn, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, n, cfg.hidden_x))

        y_xs = _linear(params, p + "film.x_scale", y)
        y_xb = _linear(params, p + "film.x_shift", y)
        ctx = ctx * (1.0 + ad.reshape(y_xs, (b, 1, cfg.hidden_x)))
        ctx = ctx + ad.reshape(y_xb, (b, 1, cfg.hidden_x))
        x = _layer_norm(params, p + "ln_x1",
                        x + _linear(params, p + "attn.out", ctx)) * node_mask
        x = _layer_norm(params, p + "ln_x2", x + _ff(params, p + "x_ff", x)) * node_mask

        e_new = _linear(params, p + "edge.out", ad.transpose(scores, (0, 2, 3, 1)))
        y_es = _linear(params, p + "film.e_scale", y)
        y_eb = _linear(params, p + "film.e_shift", y)
        e_new = e_new * (1.0 + ad.reshape(y_es, (b, 1, 1, cfg.hidden_e)))
        e_new = e_new + ad.reshape(y_eb, (b, 1, 1, cfg.hidden_e))
        e = _layer_norm(params, p + "ln_e1", e + e_new) * pair_mask
        e = _layer_norm(params, p + "ln_e2", e + _ff(params, p + "e_ff", e)) * pair_mask

        pooled_x = ad.mean_pool(x, mask.astype(np.float64)[:, :, None], axis=1)
        pooled_e = ad.mean_pool(ad.reshape(e, (b, n * n, cfg.hidden_e)),
                                flat_pair, axis=1)
        y_in = ad.concat([y, pooled_x, pooled_e], axis=-1)
        y = _layer_norm(params, p + "ln_y1", y + _linear(params, p + "y_upd", y_in))
        y = _layer_norm(params, p + "ln_y2", y + _ff(params, p + "y_ff", y))

        _check_finite(x, layer, "node")
        _check_finite(e, layer, "edge")
        _check_finite(y, layer, "global")
    return x, e, y


def encoder_forward(params, cfg: GraphTransformerConfig, batch: GraphBatch):
    """Raw latent node coordinates, (B, N, f); masked rows are zero."""
    if batch.x.shape[-1] != cfg.in_x or batch.e.shape[-1] != cfg.de:
        raise PreconditionError("batch feature sizes do not match config")
    node_mask = ad.constant(batch.mask.astype(np.float64)[:, :, None])
    x = ad.gelu(_linear(params, "embed.x", ad.constant(batch.x))) * node_mask
    e = ad.gelu(_linear(params, "embed.e", ad.constant(batch.e)))
    y = ad.gelu(_linear(params, "embed.y", ad.constant(batch.y)))
    x, e, y = _trunk(params, cfg, x, e, y, batch.mask)
    z = _linear(params, "head.z", x) * node_mask
    return z


def _pseudo_graph_inputs(params, cfg, z, mask):
    b, n, _ = z.shape
    node_mask = ad.constant(mask.astype(np.float64)[:, :, None])
    z = z * node_mask
    adj = ad.reshape(ad.matmul(z, ad.transpose(z, (0, 2, 1))), (b, n, n, 1))
    x = ad.gelu(_linear(params, "embed.x", z)) * node_mask
    e = ad.gelu(_linear(params, "embed.e", adj))
    pooled = ad.mean_pool(z, mask.astype(np.float64)[:, :, None], axis=1)
    return x, e, pooled


def decoder_forward(params, cfg: GraphTransformerConfig, z, mask):
    """Decode latent nodes into node-type and symmetric edge-type logits.

    The network sees the latent coordinates as node features, their Gram
    matrix as a pseudo-adjacency, and their masked mean as a global feature.
    """
    z = ad.as_tensor(z)
    if z.shape[-1] != cfg.latent_f:
        raise PreconditionError(
            f"latent dim {z.shape[-1]} does not match config f={cfg.latent_f}")
    b, n, _ = z.shape
    x, e, pooled = _pseudo_graph_inputs(params, cfg, z, mask)
    y = ad.gelu(_linear(params, "embed.y", pooled))
    x, e, y = _trunk(params, cfg, x, e, y, mask)
    node_mask = ad.constant(mask.astype(np.float64)[:, :, None])
    pairf = mask.astype(np.float64)
    pair_mask = ad.constant((pairf[:, :, None] * pairf[:, None, :])[:, :, :, None])
    x_logits = _linear(params, "head.x", x) * node_mask
    e_raw = _linear(params, "head.e", e)
    e_logits = (e_raw + ad.transpose(e_raw, (0, 2, 1, 3))) * 0.5 * pair_mask
    return x_logits, e_logits


def time_embedding(t, dim, horizon):
    """Sinusoidal features of t / horizon, (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = (t[:, None] / horizon) * 1000.0 * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if emb.shape[-1] < dim:
        emb = np.concatenate([emb, np.zeros((t.shape[0], dim - emb.shape[-1]))], axis=-1)
    return emb


def drift_forward(params, cfg: GraphTransformerConfig, z_t, t, mask, horizon=1.0):
    """Learned drift correction at state z_t and time t, same shape as z_t."""
    z_t = ad.as_tensor(z_t)
    b, n, _ = z_t.shape
    t = np.broadcast_to(np.atleast_1d(np.asarray(t, dtype=np.float64)), (b,))
    if np.any(t < 0.0) or np.any(t > horizon):
        raise PreconditionError(f"time t outside [0, {horizon}]")
    x, e, pooled = _pseudo_graph_inputs(params, cfg, z_t, mask)
    temb = ad.constant(time_embedding(t, cfg.time_dim, horizon))
    y = ad.gelu(_linear(params, "embed.y", ad.concat([pooled, temb], axis=-1)))
    x, e, y = _trunk(params, cfg, x, e, y, mask)
    node_mask = ad.constant(mask.astype(np.float64)[:, :, None])
    return _linear(params, "head.z", x) * node_mask


def grad_check(loss_fn, store: ParameterStore, eps=1e-5, subset=None):
    """Compare analytic to central-difference gradients on store parameters.

    `loss_fn` maps a tensors dict to a scalar Tensor. `subset` optionally
    restricts the check to a few named parameters (the full sweep is
    quadratic in parameter count).
    """
    names = sorted(store.params) if subset is None else list(subset)
    params = {k: store.params[k] for k in names}

    def wrapped(tensors):
        full = {k: ad.Tensor(v) for k, v in store.params.items()}
        for k in tensors:
            full[k] = tensors[k]
            full[k].requires_grad = True
        return loss_fn(full)

    return ad.grad_check(wrapped, params, eps=eps)
