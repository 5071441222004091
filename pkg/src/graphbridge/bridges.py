"""Diffusion-bridge mathematics over quantized latent spaces.

A driftless diffusion dZ = sigma_t dW has the Gaussian transition kernel
N(Z_T; Z_t, beta_T - beta_t) with beta_t the running integral of sigma_t^2.
Conditioning its endpoint on a target (a single latent set, the whole
lattice, or a box) adds a steering drift equal to sigma_t^2 times the
gradient of the log transition density to that target. This module exposes
those drifts in closed form, the bridge state sampler, the regression
target for the learned drift, and the Euler-Maruyama integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import NumericError, PreconditionError
from .fsq import QuantizationSpec, enumerate_lattice, nearest_lattice

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BridgeSchedule:
    """Linear diffusion coefficient on [0, T] and its exact squared integral."""

    sigma_min: float = 1.0
    sigma_max: float = 3.0
    T: float = 1.0
    steps: int = 1000
    shape: str = "linear"

    def __post_init__(self):
        if self.sigma_min <= 0 or self.sigma_max < self.sigma_min:
            raise PreconditionError("need 0 < sigma_min <= sigma_max")
        if self.T <= 0 or self.steps < 1:
            raise PreconditionError("need T > 0 and steps >= 1")
        if self.shape != "linear":
            raise PreconditionError(f"unsupported schedule shape '{self.shape}'")

    def to_dict(self):
        return {"sigma_min": self.sigma_min, "sigma_max": self.sigma_max,
                "T": self.T, "steps": self.steps, "shape": self.shape}

    @classmethod
    def from_dict(cls, d):
        return cls(sigma_min=float(d["sigma_min"]), sigma_max=float(d["sigma_max"]),
                   T=float(d["T"]), steps=int(d["steps"]), shape=str(d["shape"]))


@dataclass(frozen=True)
class PriorSpec:
    """Start distribution of the bridge: a point mass at 0 or a unit Gaussian."""

    kind: str = "fixed_zero"

    def __post_init__(self):
        if self.kind not in ("fixed_zero", "standard_normal"):
            raise PreconditionError(f"unknown prior kind '{self.kind}'")

    def sample(self, shape, rng):
        if self.kind == "fixed_zero":
            return np.zeros(shape)
        return rng.standard_normal(shape)


@dataclass(frozen=True)
class ContinuousDomainSpec:
    """Axis-aligned box [l_min, l_max] per latent dimension."""

    l_min: tuple
    l_max: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.l_min))
        hi = tuple(float(v) for v in np.atleast_1d(self.l_max))
        if len(lo) != len(hi):
            raise PreconditionError("l_min and l_max must have equal length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise PreconditionError("need l_min < l_max in every dimension")
        object.__setattr__(self, "l_min", lo)
        object.__setattr__(self, "l_max", hi)

    @property
    def f(self) -> int:
        return len(self.l_min)

    def lo(self) -> np.ndarray:
        return np.asarray(self.l_min)

    def hi(self) -> np.ndarray:
        return np.asarray(self.l_max)

    def clip(self, z) -> np.ndarray:
        return np.clip(z, self.lo(), self.hi())


def _check_time(t, sched, strict_upper=False):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > sched.T):
        raise PreconditionError(f"time {t} outside [0, {sched.T}]")
    if strict_upper and np.any(t >= sched.T):
        raise PreconditionError("drift is singular at t == T")
    return t


def sigma(t, sched: BridgeSchedule):
    """sigma_t = sigma_min + (sigma_max - sigma_min) * t / T."""
    t = _check_time(t, sched)
    return sched.sigma_min + (sched.sigma_max - sched.sigma_min) * t / sched.T


def beta(t, sched: BridgeSchedule):
    """Exact integral of sigma_s^2 from 0 to t for the linear schedule."""
    t = _check_time(t, sched)
    c = sched.sigma_max - sched.sigma_min
    return (sched.sigma_min**2 * t
            + sched.sigma_min * c * t**2 / sched.T
            + c**2 * t**3 / (3.0 * sched.T**2))


def _tail_shape(t, z):
    """Broadcast per-sample scalars against (..., N, f) states."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (np.ndim(z) - t.ndim))


def sample_bridge_state(z_G, z_0, t, sched: BridgeSchedule, rng,
                        mean_form: str = "alg1"):
    """Draw Z_t of the endpoint-pinned bridge between Z_0 and Z_G.

    mean_form "alg1" uses (beta_t / beta_T) * (Z_G + (beta_T - beta_t) Z_0);
    "standard" uses the Brownian-bridge mean with Z_0 coefficient
    (1 - beta_t / beta_T). The two agree whenever Z_0 = 0.
    """
    z_G = np.asarray(z_G, dtype=np.float64)
    z_0 = np.asarray(z_0, dtype=np.float64)
    if z_G.shape != z_0.shape:
        raise PreconditionError("z_G and z_0 shapes differ")
    t = _check_time(t, sched)
    bt = _tail_shape(beta(t, sched), z_G)
    bT = beta(sched.T, sched)
    ratio = bt / bT
    if mean_form == "alg1":
        mean = ratio * (z_G + (bT - bt) * z_0)
    elif mean_form == "standard":
        mean = ratio * z_G + (1.0 - ratio) * z_0
    else:
        raise PreconditionError(f"unknown mean_form '{mean_form}'")
    std = np.sqrt(np.maximum(bt * (1.0 - ratio), 0.0))
    return mean + rng.standard_normal(z_G.shape) * std


def drift_endpoint(z_G, z_t, t, sched: BridgeSchedule):
    """Steering force toward a pinned endpoint: sigma_t^2 (Z_G - Z_t) / (beta_T - beta_t)."""
    t = _check_time(t, sched, strict_upper=True)
    z_G = np.asarray(z_G, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    s2 = _tail_shape(sigma(t, sched) ** 2, z_t)
    remaining = _tail_shape(beta(sched.T, sched) - beta(t, sched), z_t)
    return s2 * (z_G - z_t) / remaining


def drift_lattice(z_t, t, sched: BridgeSchedule, spec: QuantizationSpec):
    """Steering force toward the whole lattice, factorized per dimension.

    The product structure of the lattice and the isotropic Gaussian kernel
    reduce the K-point softmax over lattice points to f independent
    softmaxes over the per-dimension level sets. Log weights are evaluated
    with max subtraction.
    """
    t = _check_time(t, sched, strict_upper=True)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.shape[-1] != spec.f:
        raise PreconditionError(
            f"latent dim {z_t.shape[-1]} does not match spec dim {spec.f}")
    s2 = sigma(t, sched) ** 2
    remaining = beta(sched.T, sched) - beta(t, sched)
    s2 = _tail_shape(s2, z_t[..., 0])
    remaining = _tail_shape(remaining, z_t[..., 0])
    out = np.empty_like(z_t)
    for j in range(spec.f):
        levels = spec.level_values(j)              # (L,)
        zj = z_t[..., j]                           # (...,)
        diff = levels - zj[..., None]              # (..., L)
        logw = -0.5 * diff**2 / remaining[..., None]
        logw -= logw.max(axis=-1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=-1, keepdims=True)
        out[..., j] = s2 * (w * diff).sum(axis=-1) / remaining
    return out


def drift_lattice_naive(z_t, t, sched: BridgeSchedule, spec: QuantizationSpec = None,
                        cap: int = 10**6, points=None):
    """Same steering force via explicit enumeration of all K lattice points.

    `points` overrides the spec's lattice with an explicit (K, f) point set,
    which also covers degenerate targets (a single point, a two-point set).
    """
    t = _check_time(t, sched, strict_upper=True)
    z_t = np.asarray(z_t, dtype=np.float64)
    if points is None:
        if spec is None:
            raise PreconditionError("need a QuantizationSpec or explicit points")
        points = enumerate_lattice(spec, cap=cap)  # (K, f)
    else:
        points = np.asarray(points, dtype=np.float64)
    s2 = sigma(t, sched) ** 2
    remaining = beta(sched.T, sched) - beta(t, sched)
    diff = points - z_t[..., None, :]              # (..., K, f)
    logw = -0.5 * (diff**2).sum(axis=-1) / remaining
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    return s2 * (w[..., None] * diff).sum(axis=-2) / remaining


def _norm_pdf(x):
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def drift_box(z_t, t, sched: BridgeSchedule, box: ContinuousDomainSpec):
    """Steering force that keeps the state inside an axis-aligned box.

    Per scalar entry the log endpoint mass is log(Phi(a) - Phi(b)) with
    a = (z - l_min) / sqrt(beta_T - beta_t) and b = (z - l_max) likewise;
    the CDF difference is formed on whichever tail avoids cancellation and
    clamped away from zero.
    """
    t = _check_time(t, sched, strict_upper=True)
    z_t = np.asarray(z_t, dtype=np.float64)
    lo, hi = box.lo(), box.hi()
    if z_t.shape[-1] != box.f:
        raise PreconditionError(
            f"latent dim {z_t.shape[-1]} does not match box dim {box.f}")
    if np.any(z_t < lo) or np.any(z_t > hi):
        raise PreconditionError("state outside the continuous domain box")
    s2 = _tail_shape(sigma(t, sched) ** 2, z_t)
    remaining = _tail_shape(beta(sched.T, sched) - beta(t, sched), z_t)
    root = np.sqrt(remaining)
    a = (z_t - lo) / root
    b = (z_t - hi) / root
    direct = ndtr(a) - ndtr(b)
    mirrored = ndtr(-b) - ndtr(-a)
    mass = np.where(a + b > 0.0, mirrored, direct)
    mass = np.maximum(mass, 1e-300)
    return s2 * (_norm_pdf(a) - _norm_pdf(b)) / (root * mass)


def loss_target(z_G, z_t, t, sched: BridgeSchedule, spec: QuantizationSpec):
    """Regression target for the learned drift: (endpoint - lattice) / sigma_t."""
    inv_sigma = _tail_shape(1.0 / sigma(_check_time(t, sched, strict_upper=True),
                                        sched), np.asarray(z_t))
    return inv_sigma * (drift_endpoint(z_G, z_t, t, sched)
                        - drift_lattice(z_t, t, sched, spec))


def em_integrate(drift_fn, z0, sched: BridgeSchedule, rng, clip_box=None):
    """Euler-Maruyama: Z <- Z + drift(Z, t) dt + sigma_t sqrt(dt) xi.

    Drift evaluations clamp t to T - dt, the standard treatment of the
    endpoint singularity of bridge drifts. With `clip_box` set, the state
    is projected into the box after every step.
    """
    z = np.array(z0, dtype=np.float64)
    dt = sched.T / sched.steps
    t_cap = sched.T - dt
    for k in range(sched.steps):
        t = k * dt
        tc = min(t, t_cap)
        drift = drift_fn(z, tc)
        s = sigma(t, sched)
        z = z + drift * dt + s * np.sqrt(dt) * rng.standard_normal(z.shape)
        if clip_box is not None:
            z = clip_box.clip(z)
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite state at integration step {k}")
    return z


def em_sample(psi_fn, n_nodes, sched: BridgeSchedule, spec: QuantizationSpec,
              prior: PriorSpec, rng, snap: bool = True):
    """Integrate the learned bridge from the prior and return latent nodes.

    `psi_fn(z, t)` is the learned drift correction, or None for the bare
    lattice bridge. The total drift is sigma_t * psi + the lattice steering
    force. With `snap`, the final state is snapped to the nearest lattice
    point.
    """
    z0 = prior.sample((n_nodes, spec.f), rng)

    def drift(z, t):
        eta = drift_lattice(z, t, sched, spec)
        if psi_fn is None:
            return eta
        return sigma(t, sched) * np.asarray(psi_fn(z, t)) + eta

    z = em_integrate(drift, z0, sched, rng)
    if snap:
        z = nearest_lattice(z, spec)
    return z
