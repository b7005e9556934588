"""Driving noise: Brownian motion, compound Poisson and symmetric alpha-stable
Levy processes, with reproducible per-replica random streams.

Every named law here is exactly samplable over a step dt, so increments are
exact in law (no small-jump truncation).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_KINDS = ("brownian", "compound_poisson", "alpha_stable", "brownian_plus_compound_poisson")
JUMP_LAWS = ("exponential", "normal", "pareto")


def replica_stream(seed: int, replica_id: int) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by (seed, replica_id).

    A replica's stream depends on nothing but its own id, so paths do not
    change when replicas are reordered or run alone.
    """
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(replica_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class JumpLaw:
    kind: str
    mean: float = 1.0      # exponential
    sd: float = 1.0        # normal (centred)
    alpha: float = 1.5     # pareto tail index
    x_min: float = 1.0     # pareto scale

    def __post_init__(self):
        if self.kind not in JUMP_LAWS:
            raise ValueError(f"unknown jump law {self.kind!r}")
        if self.kind == "exponential" and not self.mean > 0:
            raise ValueError("exponential mean must be positive")
        if self.kind == "normal" and not self.sd > 0:
            raise ValueError("normal sd must be positive")
        if self.kind == "pareto" and not (self.alpha > 0 and self.x_min > 0):
            raise ValueError("pareto needs alpha > 0 and x_min > 0")

    @classmethod
    def exponential(cls, mean: float = 1.0) -> "JumpLaw":
        return cls("exponential", mean=mean)

    @classmethod
    def normal(cls, sd: float = 1.0) -> "JumpLaw":
        return cls("normal", sd=sd)

    @classmethod
    def pareto(cls, alpha: float, x_min: float = 1.0) -> "JumpLaw":
        return cls("pareto", alpha=alpha, x_min=x_min)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(self.mean, size)
        if self.kind == "normal":
            return rng.normal(0.0, self.sd, size)
        return self.x_min * (1.0 + rng.pareto(self.alpha, size))

    @property
    def first_moment(self) -> float:
        if self.kind == "exponential":
            return self.mean
        if self.kind == "normal":
            return 0.0
        return self.alpha * self.x_min / (self.alpha - 1) if self.alpha > 1 else np.inf

    @property
    def second_moment(self) -> float:
        if self.kind == "exponential":
            return 2 * self.mean ** 2
        if self.kind == "normal":
            return self.sd ** 2
        return self.alpha * self.x_min ** 2 / (self.alpha - 2) if self.alpha > 2 else np.inf

    @property
    def finite_first_moment(self) -> bool:
        return self.kind != "pareto" or self.alpha > 1

    @property
    def finite_second_moment(self) -> bool:
        return self.kind != "pareto" or self.alpha > 2


@dataclass(frozen=True)
class NoiseSpec:
    """A Levy driver.  ``rate``/``jump`` describe the compound Poisson part,
    ``alpha``/``scale`` the symmetric stable law with E exp(iuZ(1)) =
    exp(-|scale*u|**alpha), ``drift`` the deterministic part of the
    Brownian-plus-jumps driver (whose Gaussian part has unit variance)."""

    kind: str = "brownian"
    rate: float = 0.0
    jump: JumpLaw | None = None
    alpha: float = 2.0
    scale: float = 1.0
    drift: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind in ("compound_poisson", "brownian_plus_compound_poisson"):
            if not self.rate > 0:
                raise ValueError("compound Poisson rate must be positive")
            if self.jump is None:
                raise ValueError("compound Poisson noise needs a jump law")
        if self.kind == "alpha_stable":
            if not 0 < self.alpha <= 2:
                raise ValueError("stable index alpha must lie in (0, 2]")
            if not self.scale > 0:
                raise ValueError("stable scale must be positive")

    @classmethod
    def brownian(cls) -> "NoiseSpec":
        return cls("brownian")

    @classmethod
    def compound_poisson(cls, rate: float, jump: JumpLaw) -> "NoiseSpec":
        return cls("compound_poisson", rate=rate, jump=jump)

    @classmethod
    def alpha_stable(cls, alpha: float, scale: float = 1.0) -> "NoiseSpec":
        return cls("alpha_stable", alpha=alpha, scale=scale)

    @classmethod
    def brownian_plus_compound_poisson(cls, drift: float, rate: float, jump: JumpLaw) -> "NoiseSpec":
        return cls("brownian_plus_compound_poisson", rate=rate, jump=jump, drift=drift)

    @property
    def large_jump_first_moment_finite(self) -> bool:
        """int_{|z|>1} |z| nu(dz) < inf."""
        if self.kind == "alpha_stable":
            return self.alpha > 1 or self.alpha == 2
        if self.jump is not None:
            return self.jump.finite_first_moment
        return True

    @property
    def large_jump_second_moment_finite(self) -> bool:
        """int_{|z|>=1} |z|**2 nu(dz) < inf."""
        if self.kind == "alpha_stable":
            return self.alpha == 2
        if self.jump is not None:
            return self.jump.finite_second_moment
        return True

    @property
    def mean_rate(self) -> float:
        """E Z(1) (nan when it does not exist)."""
        if self.kind == "brownian":
            return 0.0
        if self.kind == "alpha_stable":
            return 0.0 if self.alpha > 1 else np.nan
        m = self.rate * self.jump.first_moment
        return m + (self.drift if self.kind == "brownian_plus_compound_poisson" else 0.0)


def symmetric_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric alpha-stable draws, E exp(iuX) = exp(-|u|**alpha).

    Chambers-Mallows-Stuck with beta = 0.
    """
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def _compound_sums(noise: NoiseSpec, dt: float, rng: np.random.Generator, steps: int) -> np.ndarray:
    counts = rng.poisson(noise.rate * dt, steps)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(steps)
    jumps = noise.jump.sample(rng, total)
    return np.bincount(np.repeat(np.arange(steps), counts), weights=jumps, minlength=steps)


def sample_levy_increment(noise: NoiseSpec, dt: float, stream: np.random.Generator,
                          size: int | None = None):
    """Increment(s) Z(t+dt) - Z(t); a scalar when ``size`` is None."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = 1 if size is None else int(size)
    k = noise.kind
    if k == "brownian":
        out = np.sqrt(dt) * stream.standard_normal(steps)
    elif k == "compound_poisson":
        out = _compound_sums(noise, dt, stream, steps)
    elif k == "alpha_stable":
        out = noise.scale * dt ** (1.0 / noise.alpha) * symmetric_stable(noise.alpha, steps, stream)
    else:
        gauss = np.sqrt(dt) * stream.standard_normal(steps)
        out = noise.drift * dt + gauss + _compound_sums(noise, dt, stream, steps)
    return float(out[0]) if size is None else out


BLOCK_STEPS = 1024


def increment_stream(noise: NoiseSpec, dt: float, seed: int, replica_id: int, steps: int) -> np.ndarray:
    """The full increment sequence of one replica, drawn in fixed-size blocks."""
    rng = replica_stream(seed, replica_id)
    out = np.empty(steps)
    for s0 in range(0, steps, BLOCK_STEPS):
        m = min(BLOCK_STEPS, steps - s0)
        out[s0:s0 + m] = sample_levy_increment(noise, dt, rng, BLOCK_STEPS)[:m]
    return out
