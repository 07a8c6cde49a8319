"""Seeded, splittable random sampling for gamma, Poisson, and NB variates.

Streams are built on the counter-based Philox generator keyed by
(master_seed, stream_id), so distinct stream ids are independent by
construction and a given (seed, stream, draw index) reproduces the same
value regardless of how work is scheduled.  Child streams derive their id
from the parent id through a splitmix64-style hash.

Clamping policy: gamma shapes are clamped to ``alpha >= SHAPE_MIN`` and
samples truncated to ``y >= SAMPLE_MIN`` before they are returned, so the
downstream derivative packs never see values outside their safe domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

SHAPE_MIN = 0.05
SAMPLE_MIN = 1e-120

_MASK64 = (1 << 64) - 1


def _mix(stream_id: int, index: int) -> int:
    """splitmix64 finalizer over (stream_id, index); avalanches both inputs."""
    z = (stream_id + 0x9E3779B97F4A7C15 * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """A value-type handle on one independent random stream."""

    master_seed: int
    stream_id: int = 0

    def child(self, index: int) -> "RngStream":
        """Derived independent stream; replicate i always uses child(i)."""
        return RngStream(self.master_seed, _mix(self.stream_id, index))

    def generator(self) -> Generator:
        """Fresh generator at the start of this stream's sequence."""
        # seeding from the pair avoids the entropy syscall of key= seeding
        return Generator(
            Philox(seed=[self.master_seed & _MASK64, self.stream_id & _MASK64])
        )


def clamp_shape(alpha: float) -> float:
    if not alpha > 0:
        raise ValueError(f"gamma shape must be positive, got {alpha!r}")
    return max(alpha, SHAPE_MIN)


def _standard_gamma_at_least_one(alpha: float, gen: Generator) -> float:
    # Marsaglia-Tsang squeeze/accept, alpha >= 1.
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = gen.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = gen.random()
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def gamma_unit_sample(alpha: float, gen: Generator) -> float:
    """One draw from Gam(alpha, 1) with the shape clamp and truncation."""
    a = clamp_shape(alpha)
    if a >= 1.0:
        y = _standard_gamma_at_least_one(a, gen)
    else:
        # boost: Gam(a) = Gam(a+1) * U^(1/a)
        y = _standard_gamma_at_least_one(a + 1.0, gen)
        u = gen.random()
        y = y * u ** (1.0 / a) if u > 0.0 else 0.0
    return max(y, SAMPLE_MIN)


def gamma_sample(alpha: float, beta: float, rng: RngStream | Generator) -> float:
    """One draw from Gam(alpha, rate beta) as a unit-rate draw over beta."""
    if not beta > 0:
        raise ValueError(f"gamma rate must be positive, got {beta!r}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    y = gamma_unit_sample(alpha, gen) / beta
    return max(y, SAMPLE_MIN)


def poisson_sample(lam: float, rng: RngStream | Generator) -> int:
    """One Poisson draw; lam = 0 returns 0."""
    if not lam >= 0:
        raise ValueError(f"poisson rate must be nonnegative, got {lam!r}")
    if lam == 0.0:
        return 0
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return int(gen.poisson(lam))


def nb_sample(r: float, p: float, rng: RngStream | Generator) -> int:
    """One NB(r, p) draw via the gamma-Poisson mixture; mean r p / (1-p)."""
    if not r > 0:
        raise ValueError(f"NB r must be positive, got {r!r}")
    if not (0.0 < p < 1.0):
        raise ValueError(f"NB p must be in (0, 1), got {p!r}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    lam = gamma_sample(r, (1.0 - p) / p, gen)
    return poisson_sample(lam, gen)
