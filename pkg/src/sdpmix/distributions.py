"""Seeded random streams, the handful of laws the samplers draw from, and the
generating error distributions E1-E9 used by the simulation study.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from .exceptions import ParameterError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct ``stream_id`` values under one seed give statistically
    independent PCG64 generators. A stream is owned by a single chain or
    replication and must not be shared between threads.
    """

    __slots__ = ("seed", "stream_id", "gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ParameterError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. one per method within a replication."""
        out = RngStream.__new__(RngStream)
        out.seed = self.seed
        out.stream_id = self.stream_id
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, int(index)))
        out.gen = np.random.Generator(np.random.PCG64(ss))
        return out

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# elementary laws


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    def __post_init__(self):
        _positive("variance", self.var)

    def draw(self, gen, size=None):
        return gen.normal(self.mean, math.sqrt(self.var), size)


@dataclass(frozen=True)
class InverseGamma:
    """Density ``rate**shape / Gamma(shape) * x**(-shape-1) * exp(-rate/x)``."""

    shape: float
    rate: float

    def __post_init__(self):
        _positive("inverse-gamma shape", self.shape)
        _positive("inverse-gamma rate", self.rate)

    def draw(self, gen, size=None):
        return self.rate / gen.standard_gamma(self.shape, size)

    def mean(self):
        return self.rate / (self.shape - 1.0) if self.shape > 1 else math.inf

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.shape * math.log(self.rate) - special.gammaln(self.shape)
                - (self.shape + 1.0) * np.log(x) - self.rate / x)


@dataclass(frozen=True)
class StudentT:
    df: float

    def __post_init__(self):
        _positive("degrees of freedom", self.df)

    def draw(self, gen, size=None):
        return gen.standard_t(self.df, size)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ParameterError(f"uniform bounds must satisfy lo < hi, got ({self.lo}, {self.hi})")

    def draw(self, gen, size=None):
        return gen.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        _positive("beta parameter a", self.a)
        _positive("beta parameter b", self.b)

    def draw(self, gen, size=None):
        return gen.beta(self.a, self.b, size)


class Categorical:
    """Categorical law given unnormalized log-weights.

    Weights are exponentiated after subtracting their maximum, so log-weights
    hundreds of nats apart do not underflow to an all-zero vector.
    """

    def __init__(self, log_weights: Sequence[float]):
        lw = np.asarray(log_weights, dtype=float)
        if lw.ndim != 1 or lw.size == 0:
            raise ParameterError("categorical needs a non-empty 1-d vector of log-weights")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ParameterError("categorical log-weights must not be NaN or +inf")
        top = lw.max()
        if top == -np.inf:
            raise ParameterError("categorical log-weights are all -inf")
        self.log_weights = lw
        self.cdf = np.cumsum(np.exp(lw - top))

    @property
    def probabilities(self):
        return np.diff(self.cdf, prepend=0.0) / self.cdf[-1]

    def draw(self, gen, size=None):
        u = gen.random(size) * self.cdf[-1]
        idx = np.searchsorted(self.cdf, u, side="right")
        idx = np.minimum(idx, self.cdf.size - 1)
        return int(idx) if size is None else idx


def sample(rng, dist, size=None):
    """Draw from one of the elementary laws above."""
    return dist.draw(as_generator(rng), size)


def normal_logpdf(x, sd):
    return -0.5 * (x / sd) ** 2 - math.log(sd) - LOG_SQRT_2PI


# ---------------------------------------------------------------------------
# generating error laws


STUDENT_T, STANDARD_NORMAL, UNIFORM, SYM_MIXTURE = "student_t", "normal", "uniform", "sym_mixture"


@dataclass(frozen=True)
class ErrorSpec:
    """A generating error law.

    ``SymMixture`` uses the mirrored parameterization
    ``p(x) = sum_k w_k (phi(x - z_k) + phi(x + z_k))`` with ``2 * sum(w) == 1``.
    """

    kind: str
    df: float | None = None
    lo: float | None = None
    hi: float | None = None
    weights: tuple = ()
    centers: tuple = ()
    sd: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.kind == STUDENT_T:
            _positive("degrees of freedom", self.df)
        elif self.kind == UNIFORM:
            Uniform(self.lo, self.hi)
        elif self.kind == SYM_MIXTURE:
            w = np.asarray(self.weights, dtype=float)
            z = np.asarray(self.centers, dtype=float)
            if w.ndim != 1 or w.shape != z.shape or w.size == 0:
                raise ParameterError("mixture weights and centers must be equal-length vectors")
            if np.any(w < 0) or abs(2.0 * w.sum() - 1.0) > 1e-9:
                raise ParameterError(f"mirrored mixture needs 2*sum(weights) == 1, got {2 * w.sum():.12g}")
            if np.any(z < 0):
                raise ParameterError("mixture centers are stored as non-negative offsets")
            _positive("component sd", self.sd)
        elif self.kind != STANDARD_NORMAL:
            raise ParameterError(f"unknown error kind {self.kind!r}")

    @classmethod
    def student_t(cls, df, name=None):
        return cls(STUDENT_T, df=float(df), name=name)

    @classmethod
    def standard_normal(cls, name=None):
        return cls(STANDARD_NORMAL, name=name)

    @classmethod
    def uniform(cls, lo, hi, name=None):
        return cls(UNIFORM, lo=float(lo), hi=float(hi), name=name)

    @classmethod
    def sym_mixture(cls, weights, centers, sd=1.0, name=None):
        return cls(SYM_MIXTURE, weights=tuple(float(w) for w in weights),
                   centers=tuple(float(z) for z in centers), sd=float(sd), name=name)

    @property
    def label(self):
        return self.name or self.kind

    @property
    def is_mixture(self):
        return self.kind == SYM_MIXTURE


ERROR_TOKENS = {
    "E1": ErrorSpec.student_t(1, name="E1"),
    "E2": ErrorSpec.student_t(2, name="E2"),
    "E3": ErrorSpec.student_t(4, name="E3"),
    "E4": ErrorSpec.student_t(8, name="E4"),
    "E5": ErrorSpec.student_t(16, name="E5"),
    "E6": ErrorSpec.standard_normal(name="E6"),
    "E7": ErrorSpec.uniform(-3, 3, name="E7"),
    "E8": ErrorSpec.sym_mixture((0.1, 0.2, 0.15, 0.05), (0.0, 1.5, 2.5, 3.5), name="E8"),
    "E9": ErrorSpec.sym_mixture((0.05, 0.15, 0.1, 0.2), (0.0, 1.0, 2.0, 4.0), name="E9"),
}


def parse_error_spec(text) -> ErrorSpec:
    """Parse ``"E1".."E9"`` or a JSON object such as
    ``{"kind": "sym_mixture", "weights": [...], "centers": [...]}``.
    """
    if isinstance(text, ErrorSpec):
        return text
    if isinstance(text, dict):
        obj = text
    else:
        token = str(text).strip()
        if token.upper() in ERROR_TOKENS:
            return ERROR_TOKENS[token.upper()]
        try:
            obj = json.loads(token)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"unrecognised error spec {token!r}") from exc
        if not isinstance(obj, dict):
            raise ParameterError("JSON error spec must be an object")
    obj = dict(obj)
    kind = obj.pop("kind", None)
    name = obj.pop("name", None)
    try:
        if kind == STUDENT_T:
            return ErrorSpec.student_t(obj["df"], name=name)
        if kind == STANDARD_NORMAL:
            return ErrorSpec.standard_normal(name=name)
        if kind == UNIFORM:
            return ErrorSpec.uniform(obj["lo"], obj["hi"], name=name)
        if kind == SYM_MIXTURE:
            return ErrorSpec.sym_mixture(obj["weights"], obj["centers"], obj.get("sd", 1.0), name=name)
    except KeyError as exc:
        raise ParameterError(f"error spec of kind {kind!r} is missing field {exc}") from None
    raise ParameterError(f"unknown error kind {kind!r}")


def _mixture_density(spec, x):
    ax = np.abs(x)
    s = spec.sd
    out = np.zeros_like(ax)
    for w, z in zip(spec.weights, spec.centers):
        # pairwise sum in a fixed order keeps p(x) == p(-x) bit for bit
        out = out + w * (np.exp(-0.5 * ((ax - z) / s) ** 2) + np.exp(-0.5 * ((ax + z) / s) ** 2))
    return out * (INV_SQRT_2PI / s)


def error_density(spec: ErrorSpec, x):
    """Density of the generating law; vectorised over ``x``."""
    xa = np.asarray(x, dtype=float)
    if spec.kind == STUDENT_T:
        out = stats.t.pdf(np.abs(xa), spec.df)
    elif spec.kind == STANDARD_NORMAL:
        out = INV_SQRT_2PI * np.exp(-0.5 * np.abs(xa) ** 2)
    elif spec.kind == UNIFORM:
        out = np.where((xa >= spec.lo) & (xa <= spec.hi), 1.0 / (spec.hi - spec.lo), 0.0)
    else:
        out = _mixture_density(spec, xa)
    return float(out) if np.ndim(x) == 0 else out


def error_sample(rng, spec: ErrorSpec, size=None):
    gen = as_generator(rng)
    if spec.kind == STUDENT_T:
        return gen.standard_t(spec.df, size)
    if spec.kind == STANDARD_NORMAL:
        return gen.standard_normal(size)
    if spec.kind == UNIFORM:
        return gen.uniform(spec.lo, spec.hi, size)
    probs = 2.0 * np.asarray(spec.weights)
    probs = probs / probs.sum()
    centers = np.asarray(spec.centers)
    n = 1 if size is None else int(np.prod(size))
    k = gen.choice(len(probs), size=n, p=probs)
    sign = np.where(gen.random(n) < 0.5, 1.0, -1.0)
    out = sign * centers[k] + spec.sd * gen.standard_normal(n)
    return float(out[0]) if size is None else out.reshape(size)
