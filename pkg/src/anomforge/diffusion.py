"""Gaussian diffusion (DDPM) math on 4-D latents, networks injected.

The forward process corrupts a latent z_0 over T discrete steps,

    q(z_t | z_{t-1}) = N(sqrt(1 - beta_t) z_{t-1}, beta_t I)
    q(z_t | z_0)     = N(sqrt(abar_t) z_0, (1 - abar_t) I),   abar_t = prod alpha_s

with alpha_t = 1 - beta_t. The reverse chain is parameterized by a noise
predictor ("denoiser") supplied by the caller; this module contains only the
closed-form algebra, so any callable satisfying the small protocols below can
drive it - trained networks in production, analytic oracles in tests.

Timesteps are 1-based: t runs from 1 to T and schedule arrays are indexed
``beta[t-1]``. abar_0 = 1 by convention, so the t=1 posterior has zero
variance and the final reverse step injects no noise.

Conditioned variants take a fixed-width condition vector c_p; the pooled
encoder at the bottom turns a latent into one by average pooling + zero pad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .volume import Volume3D

CONDITION_WIDTH = 1280  # default c_p length


@dataclass(frozen=True)
class LatentTensor:
    """Float64 latent of shape (channels, h, w, d)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or min(v.shape) < 1:
            raise ValueError(f"latent must be 4-D and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("latent contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ConditionVector:
    """Flat conditioning vector c_p."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError(f"condition must be a non-empty 1-D vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("condition contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule beta_1..beta_T with cached alpha products."""

    beta: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.beta, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("schedule needs at least one step")
        if not np.all((b > 0.0) & (b < 1.0)):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        object.__setattr__(self, "beta", b)

    @property
    def T(self) -> int:
        return self.beta.size

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(1.0 - self.beta)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")
        return t

    def alpha_bar_prev(self, t: int) -> float:
        """abar_{t-1}, with abar_0 = 1."""
        t = self.check_t(t)
        return float(self.alpha_bar[t - 2]) if t >= 2 else 1.0


@runtime_checkable
class Denoiser(Protocol):
    """Noise predictor: estimates the eps that produced z_t from z_0.

    Implementations may also expose ``predict_variance(z_t, c_p, t) -> array``
    returning a per-coordinate interpolation weight nu in [0, 1]; the reverse
    step then uses variance exp(nu log beta_t + (1 - nu) log beta_tilde_t).
    """

    def predict(self, z_t: LatentTensor, c_p: ConditionVector | None, t: int) -> LatentTensor:
        ...


@runtime_checkable
class LatentCodec(Protocol):
    """Invertible-enough map between image volumes and latents."""

    def encode(self, vol: Volume3D) -> LatentTensor: ...

    def decode(self, z: LatentTensor) -> Volume3D: ...


@runtime_checkable
class ConditionEncoder(Protocol):
    def encode(self, z: LatentTensor) -> ConditionVector: ...


def linear_schedule(T: int = 1000, beta_1: float = 0.0015, beta_T: float = 0.0195) -> NoiseSchedule:
    """Evenly spaced variances from beta_1 to beta_T inclusive."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise ValueError(f"need 0 < beta_1 <= beta_T < 1, got ({beta_1}, {beta_T})")
    return NoiseSchedule(np.linspace(beta_1, beta_T, T))


def _like(z: LatentTensor, other: LatentTensor, what: str) -> None:
    if z.dims != other.dims:
        raise ValueError(f"{what}: latent shape mismatch {z.dims} vs {other.dims}")


def forward_sample(z0: LatentTensor, t: int, eps: LatentTensor, s: NoiseSchedule) -> LatentTensor:
    """Draw from q(z_t | z_0) using the supplied standard-normal eps."""
    t = s.check_t(t)
    _like(eps, z0, "forward_sample")
    ab = float(s.alpha_bar[t - 1])
    return LatentTensor(math.sqrt(ab) * z0.values + math.sqrt(1.0 - ab) * eps.values)


def posterior_variance(s: NoiseSchedule, t: int) -> float:
    """Var of q(z_{t-1} | z_t, z_0): beta_t (1 - abar_{t-1}) / (1 - abar_t)."""
    t = s.check_t(t)
    ab_t = float(s.alpha_bar[t - 1])
    ab_prev = s.alpha_bar_prev(t)
    return float(s.beta[t - 1]) * (1.0 - ab_prev) / (1.0 - ab_t)


def posterior_mean_var(
    z_t: LatentTensor, z0: LatentTensor, t: int, s: NoiseSchedule
) -> tuple[LatentTensor, float]:
    """Mean and (scalar) variance of the forward posterior q(z_{t-1} | z_t, z_0)."""
    t = s.check_t(t)
    _like(z_t, z0, "posterior_mean_var")
    ab_t = float(s.alpha_bar[t - 1])
    ab_prev = s.alpha_bar_prev(t)
    beta_t = float(s.beta[t - 1])
    alpha_t = float(s.alpha[t - 1])
    c0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    ct = math.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    mean = LatentTensor(c0 * z0.values + ct * z_t.values)
    return mean, posterior_variance(s, t)


def _predicted_mean(
    z_t: LatentTensor, t: int, den: Denoiser, c_p: ConditionVector | None, s: NoiseSchedule
) -> LatentTensor:
    eps_hat = den.predict(z_t, c_p, t)
    _like(eps_hat, z_t, "denoiser output")
    beta_t = float(s.beta[t - 1])
    ab_t = float(s.alpha_bar[t - 1])
    alpha_t = float(s.alpha[t - 1])
    mu = (z_t.values - beta_t / math.sqrt(1.0 - ab_t) * eps_hat.values) / math.sqrt(alpha_t)
    return LatentTensor(mu)


def _predicted_variance(
    z_t: LatentTensor, t: int, den: Denoiser, c_p: ConditionVector | None, s: NoiseSchedule
) -> np.ndarray | float:
    """Scalar beta_tilde_t, or the denoiser's interpolated per-coordinate variance."""
    var_small = posterior_variance(s, t)
    head = getattr(den, "predict_variance", None)
    if head is None:
        return var_small
    nu = np.asarray(head(z_t, c_p, t), dtype=np.float64)
    if nu.shape != z_t.dims:
        raise ValueError(f"variance head shape {nu.shape} != latent shape {z_t.dims}")
    if float(nu.min()) < 0.0 or float(nu.max()) > 1.0:
        raise ValueError("variance interpolation weight must lie in [0, 1]")
    if var_small <= 0.0:
        # t=1: beta_tilde is exactly 0 and log-interpolation degenerates
        return var_small
    beta_t = float(s.beta[t - 1])
    return np.exp(nu * math.log(beta_t) + (1.0 - nu) * math.log(var_small))


def reverse_step_mean(
    z_t: LatentTensor,
    t: int,
    den: Denoiser,
    c_p: ConditionVector | None,
    s: NoiseSchedule,
) -> LatentTensor:
    """Model mean of p(z_{t-1} | z_t): the eps-parameterized posterior mean."""
    t = s.check_t(t)
    return _predicted_mean(z_t, t, den, c_p, s)


def reverse_step(
    z_t: LatentTensor,
    t: int,
    den: Denoiser,
    c_p: ConditionVector | None,
    s: NoiseSchedule,
    rng: np.random.Generator,
) -> LatentTensor:
    """Sample z_{t-1} from the model reverse kernel.

    At t=1 the step is deterministic (no noise injection). Otherwise the
    variance is beta_tilde_t, or the denoiser's learned interpolation if it
    exposes a variance head.
    """
    t = s.check_t(t)
    mean = _predicted_mean(z_t, t, den, c_p, s)
    if t == 1:
        return mean
    var = _predicted_variance(z_t, t, den, c_p, s)
    noise = rng.standard_normal(z_t.dims)
    return LatentTensor(mean.values + np.sqrt(var) * noise)


def simple_loss(
    den: Denoiser,
    z0: LatentTensor,
    c_p: ConditionVector | None,
    t: int,
    eps: LatentTensor,
    s: NoiseSchedule,
) -> float:
    """Mean squared eps-prediction error at one timestep (the training loss)."""
    t = s.check_t(t)
    _like(eps, z0, "simple_loss")
    z_t = forward_sample(z0, t, eps, s)
    eps_hat = den.predict(z_t, c_p, t)
    _like(eps_hat, z0, "denoiser output")
    diff = eps_hat.values - eps.values
    return float(np.mean(diff * diff))


def gaussian_kl(
    mu_q: np.ndarray, var_q: np.ndarray | float, mu_p: np.ndarray, var_p: np.ndarray | float
) -> float:
    """KL(N(mu_q, var_q I-diag) || N(mu_p, var_p)) summed over coordinates."""
    var_q = np.asarray(var_q, dtype=np.float64)
    var_p = np.asarray(var_p, dtype=np.float64)
    if np.any(var_q <= 0.0) or np.any(var_p <= 0.0):
        raise ValueError("KL needs strictly positive variances")
    term = 0.5 * (np.log(var_p / var_q) + (var_q + (mu_q - mu_p) ** 2) / var_p - 1.0)
    return float(np.sum(np.broadcast_to(term, np.asarray(mu_q).shape)))


@dataclass(frozen=True)
class ElboTerms:
    """Per-step KL summands (t = 2..T, in that order) and the decode term."""

    kl: tuple[float, ...]
    decode_log_likelihood: float

    @property
    def negative_elbo(self) -> float:
        return math.fsum(self.kl) - self.decode_log_likelihood


def elbo_terms(
    z0: LatentTensor,
    den: Denoiser,
    c_p: ConditionVector | None,
    s: NoiseSchedule,
    rng: np.random.Generator,
) -> ElboTerms:
    """Monte-Carlo ELBO decomposition along one sampled forward trajectory.

    For each t >= 2, KL( q(z_{t-1} | z_t, z_0) || p(z_{t-1} | z_t) ) with the
    model mean from the denoiser; the decode term is the log-likelihood of z_0
    under a Gaussian at the t=1 model mean with variance beta_1. (The prior
    KL at t=T against N(0, I) is schedule-determined and omitted, as is usual
    when only denoiser quality is compared.)
    """
    kls: list[float] = []
    decode = 0.0
    for t in range(1, s.T + 1):
        eps = LatentTensor(rng.standard_normal(z0.dims))
        z_t = forward_sample(z0, t, eps, s)
        mean_p = _predicted_mean(z_t, t, den, c_p, s)
        if t == 1:
            var1 = float(s.beta[0])
            resid = z0.values - mean_p.values
            decode = float(
                -0.5 * np.sum(resid * resid / var1 + math.log(2.0 * math.pi * var1))
            )
            continue
        mean_q, var_q = posterior_mean_var(z_t, z0, t, s)
        var_p = _predicted_variance(z_t, t, den, c_p, s)
        kls.append(gaussian_kl(mean_q.values, var_q, mean_p.values, var_p))
    return ElboTerms(kl=tuple(kls), decode_log_likelihood=decode)


@dataclass(frozen=True)
class IdentityCodec:
    """Volume <-> single-channel latent, values untouched."""

    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def encode(self, vol: Volume3D) -> LatentTensor:
        return LatentTensor(vol.values[None, ...])

    def decode(self, z: LatentTensor) -> Volume3D:
        if z.dims[0] != 1:
            raise ValueError(f"identity codec expects one channel, got {z.dims[0]}")
        return Volume3D(z.values[0], self.spacing)


def partial_reconstruct(
    x: Volume3D,
    codec: LatentCodec,
    den: Denoiser,
    cond: ConditionEncoder | None,
    T_int: int,
    s: NoiseSchedule,
    rng: np.random.Generator,
) -> Volume3D:
    """Noise the input to an intermediate step, then denoise back down.

    The same input supplies both the starting latent and the condition vector.
    Partial noising (T_int well below T) keeps anatomy while letting the
    denoiser rewrite local detail, which is what makes the output usable as a
    healthy reference for anomaly scoring. T_int = 0 is the identity (decode
    of encode). Draw order: forward eps first, then one noise draw per
    reverse step from T_int down to 2.
    """
    T_int = int(T_int)
    if not 0 <= T_int <= s.T:
        raise ValueError(f"T_int must lie in 0..{s.T}, got {T_int}")
    z0 = codec.encode(x)
    c_p = cond.encode(z0) if cond is not None else None
    if T_int == 0:
        return codec.decode(z0)
    eps = LatentTensor(rng.standard_normal(z0.dims))
    z = forward_sample(z0, T_int, eps, s)
    for t in range(T_int, 0, -1):
        z = reverse_step(z, t, den, c_p, s, rng)
    return codec.decode(z)


# --- injectable denoisers -------------------------------------------------


@dataclass(frozen=True)
class ZeroDenoiser:
    """Predicts eps = 0: the reverse chain only rescales and adds noise."""

    def predict(self, z_t: LatentTensor, c_p: ConditionVector | None, t: int) -> LatentTensor:
        return LatentTensor(np.zeros(z_t.dims))


@dataclass(frozen=True)
class IdentityEpsDenoiser:
    """Predicts eps = z_t; useful as a deliberately wrong reference point."""

    def predict(self, z_t: LatentTensor, c_p: ConditionVector | None, t: int) -> LatentTensor:
        return z_t


@dataclass(frozen=True)
class GaussianOracleDenoiser:
    """Bayes-optimal noise predictor when z_0 ~ N(mu, var) coordinatewise.

    Conjugacy gives E[z_0 | z_t] in closed form:

        E[z_0 | z_t] = (mu / var + sqrt(abar_t) z_t / (1 - abar_t))
                       / (1 / var + abar_t / (1 - abar_t))

    and the implied eps estimate follows from inverting the forward marginal.
    ``mu``/``var`` may be scalars or arrays broadcastable to the latent shape.
    The schedule is bound at construction because the denoiser interface
    carries only the integer timestep.
    """

    mu: float | np.ndarray
    var: float | np.ndarray
    schedule: NoiseSchedule

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.var) <= 0.0):
            raise ValueError("prior variance must be positive")

    def posterior_z0_mean(self, z_t: LatentTensor, t: int) -> np.ndarray:
        t = self.schedule.check_t(t)
        ab = float(self.schedule.alpha_bar[t - 1])
        precision = 1.0 / np.asarray(self.var, dtype=np.float64) + ab / (1.0 - ab)
        lean = np.asarray(self.mu, dtype=np.float64) / np.asarray(self.var, dtype=np.float64)
        return (lean + math.sqrt(ab) * z_t.values / (1.0 - ab)) / precision

    def predict(self, z_t: LatentTensor, c_p: ConditionVector | None, t: int) -> LatentTensor:
        t = self.schedule.check_t(t)
        ab = float(self.schedule.alpha_bar[t - 1])
        z0_hat = self.posterior_z0_mean(z_t, t)
        eps_hat = (z_t.values - math.sqrt(ab) * z0_hat) / math.sqrt(1.0 - ab)
        return LatentTensor(eps_hat)


def gaussian_oracle_denoiser(
    mu: float | np.ndarray, var: float | np.ndarray, s: NoiseSchedule
) -> GaussianOracleDenoiser:
    return GaussianOracleDenoiser(mu=mu, var=var, schedule=s)


DENOISER_PLUGINS = ("zero", "identity-eps", "gaussian-oracle")


def make_denoiser(name: str, s: NoiseSchedule, params: dict | None = None) -> Denoiser:
    """Build a named analytic denoiser (the injection point for the CLI)."""
    params = dict(params or {})
    if name == "zero":
        return ZeroDenoiser()
    if name == "identity-eps":
        return IdentityEpsDenoiser()
    if name == "gaussian-oracle":
        mu = float(params.pop("mu", 0.0))
        var = float(params.pop("var", 1.0))
        if params:
            raise ValueError(f"unknown gaussian-oracle params: {sorted(params)}")
        return gaussian_oracle_denoiser(mu, var, s)
    raise ValueError(f"unknown denoiser {name!r}; available: {', '.join(DENOISER_PLUGINS)}")


# --- condition encoding ---------------------------------------------------


def _adaptive_mean_pool(arr: np.ndarray, out_dims: tuple[int, ...]) -> np.ndarray:
    """Mean over near-equal contiguous bins per axis (floor-boundary split)."""
    for axis, m in enumerate(out_dims):
        n = arr.shape[axis]
        if m > n:
            raise ValueError(f"cannot pool axis {axis} from {n} up to {m}")
        edges = (np.arange(m + 1) * n) // m
        moved = np.moveaxis(arr, axis, 0)
        sums = np.add.reduceat(moved, edges[:-1], axis=0)
        counts = np.diff(edges).astype(np.float64)
        moved = sums / counts.reshape((m,) + (1,) * (moved.ndim - 1))
        arr = np.moveaxis(moved, 0, axis)
    return arr


@dataclass(frozen=True)
class PooledConditionEncoder:
    """Average-pool a latent to a fixed block, flatten, zero-pad to ``width``."""

    pool_dims: tuple[int, int, int, int] = (1, 8, 8, 8)
    width: int = CONDITION_WIDTH

    def __post_init__(self) -> None:
        if len(self.pool_dims) != 4 or any(int(d) < 1 for d in self.pool_dims):
            raise ValueError(f"pool_dims must be four positive ints, got {self.pool_dims!r}")
        object.__setattr__(self, "pool_dims", tuple(int(d) for d in self.pool_dims))
        if int(np.prod(self.pool_dims)) > self.width:
            raise ValueError(
                f"pooled block {self.pool_dims} has {int(np.prod(self.pool_dims))} values; "
                f"condition width is only {self.width}"
            )

    def encode(self, z: LatentTensor) -> ConditionVector:
        pooled = _adaptive_mean_pool(z.values, self.pool_dims)
        flat = pooled.reshape(-1)  # C order: channel-major
        out = np.zeros(self.width, dtype=np.float64)
        out[: flat.size] = flat
        return ConditionVector(out)


def pooled_condition_encoder(
    pool_dims: tuple[int, int, int, int] = (1, 8, 8, 8), width: int = CONDITION_WIDTH
) -> PooledConditionEncoder:
    return PooledConditionEncoder(pool_dims=tuple(pool_dims), width=width)
