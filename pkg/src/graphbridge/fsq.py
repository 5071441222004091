"""Finite scalar quantization of latent node sets.

Each latent dimension j is squashed with tanh, scaled by L_j / 2 and rounded,
which lands every entry on one of the L_j integer levels
[-(L_j - 1) / 2, ..., -1, 0, 1, ..., (L_j - 1) / 2]. The product of the
per-dimension level sets forms the quantization lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NumericError, PreconditionError

DEFAULT_LEVELS = (5, 5, 5, 5, 5, 5)
LATTICE_ENUM_CAP = 10**6


@dataclass(frozen=True)
class QuantizationSpec:
    """Per-dimension level counts; all must be odd and at least 3."""

    levels: tuple[int, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        for L in levels:
            if L < 3 or L % 2 == 0:
                raise PreconditionError(
                    f"quantization levels must be odd and >= 3, got {levels}")

    @property
    def f(self) -> int:
        return len(self.levels)

    @property
    def cardinality(self) -> int:
        out = 1
        for L in self.levels:
            out *= L
        return out

    @property
    def half_spans(self) -> np.ndarray:
        """(L_j - 1) / 2 per dimension, the largest level magnitude."""
        return (np.asarray(self.levels, dtype=np.float64) - 1.0) / 2.0

    def level_values(self, dim: int) -> np.ndarray:
        h = (self.levels[dim] - 1) // 2
        return np.arange(-h, h + 1, dtype=np.float64)


@dataclass
class LatentSet:
    """An N x f matrix of latent node coordinates, raw or quantized."""

    z: np.ndarray
    quantized: bool = False

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def f(self) -> int:
        return self.z.shape[-1]

    def on_lattice(self, spec: QuantizationSpec) -> bool:
        if self.z.shape[-1] != spec.f:
            return False
        h = spec.half_spans
        return bool(np.all(self.z == np.round(self.z))
                    and np.all(np.abs(self.z) <= h))


def _round_half_away(x):
    """Round half away from zero, deterministically across platforms."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5) + 0.0


def quantize(z, spec: QuantizationSpec):
    """Map raw coordinates onto the lattice: round((L_j / 2) * tanh(z_j)).

    (L_j / 2) * tanh stays strictly inside (-L_j / 2, L_j / 2), so for odd
    L_j the rounded value never exceeds the outermost level.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != spec.f:
        raise PreconditionError(
            f"latent dim {z.shape[-1]} does not match spec dim {spec.f}")
    if not np.all(np.isfinite(z)):
        raise NumericError("quantize: non-finite latent input")
    half = np.asarray(spec.levels, dtype=np.float64) / 2.0
    return _round_half_away(half * np.tanh(z))


def ste_combine(z_raw, z_q):
    """Straight-through combination: value of z_q, gradient of z_raw.

    `z_raw` is an autodiff Tensor; the return value equals `z_q` in the
    forward pass while the backward pass treats the whole operation as the
    identity on `z_raw` (z_raw + stopgrad(z_q - z_raw)).
    """
    z_raw = ad.as_tensor(z_raw)
    q = z_q.value if isinstance(z_q, ad.Tensor) else np.asarray(z_q, dtype=np.float64)
    if q.shape != z_raw.shape:
        raise PreconditionError(
            f"shape mismatch in ste_combine: {z_raw.shape} vs {q.shape}")
    return z_raw + ad.constant(q - z_raw.value)


def enumerate_lattice(spec: QuantizationSpec, cap: int = LATTICE_ENUM_CAP):
    """All K lattice points in lexicographic order, as a (K, f) array."""
    if spec.cardinality > cap:
        raise PreconditionError(
            f"lattice cardinality {spec.cardinality} exceeds cap {cap}")
    axes = [spec.level_values(j) for j in range(spec.f)]
    points = np.array(list(itertools.product(*axes)), dtype=np.float64)
    return points.reshape(spec.cardinality, spec.f)


def nearest_lattice(z, spec: QuantizationSpec):
    """Snap each entry to its nearest level; ties break toward zero."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != spec.f:
        raise PreconditionError(
            f"latent dim {z.shape[-1]} does not match spec dim {spec.f}")
    if not np.all(np.isfinite(z)):
        raise NumericError("nearest_lattice: non-finite input")
    # nearest integer with ties toward zero, then clamp into the level range
    snapped = np.sign(z) * np.ceil(np.abs(z) - 0.5)
    h = spec.half_spans
    return np.clip(snapped, -h, h) + 0.0
