"""Grouped regression data, synthetic data generation, and the growth-data loader."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .distributions import LOG_SQRT_2PI, ErrorSpec, as_generator, error_sample, parse_error_spec
from .exceptions import DataFormatError, DimensionError, ParameterError


class PanelDataset:
    """Grouped observations ``(Y_i, X_i)``, ``i = 1..n``, with ``m_i`` rows each.

    Stored flat: ``y`` (N,), ``X`` (N, p), ``group`` (N,) group index and
    ``Z`` (N, q) the random-effect design (a column of ones by default; the
    growth data adds the age column for a random slope). Immutable by
    convention and shared freely between chains.
    """

    def __init__(self, groups: Sequence, Z_groups: Sequence | None = None, names=None):
        if len(groups) == 0:
            raise DimensionError("dataset needs at least one group")
        ys, Xs = [], []
        p = None
        for i, (y, X) in enumerate(groups):
            y = np.asarray(y, dtype=float).reshape(-1)
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(-1, 1)
            if y.size == 0:
                raise DimensionError(f"group {i} is empty")
            if X.shape[0] != y.size:
                raise DimensionError(f"group {i}: {y.size} responses but {X.shape[0]} covariate rows")
            if p is None:
                p = X.shape[1]
            elif X.shape[1] != p:
                raise DimensionError(f"group {i} has {X.shape[1]} covariates, expected {p}")
            ys.append(y)
            Xs.append(X)
        self.y = np.concatenate(ys)
        self.X = np.vstack(Xs)
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise DimensionError("dataset contains non-finite entries")
        self.sizes = np.array([y.size for y in ys], dtype=np.int64)
        self.group = np.repeat(np.arange(len(ys)), self.sizes)
        if Z_groups is None:
            self.Z = np.ones((self.y.size, 1))
        else:
            self.Z = np.vstack([np.asarray(z, dtype=float).reshape(len(y), -1) for z, y in zip(Z_groups, ys)])
        self.names = list(names) if names is not None else [f"beta_{k + 1}" for k in range(p)]
        for a in (self.y, self.X, self.Z, self.sizes, self.group):
            a.flags.writeable = False

    @classmethod
    def from_arrays(cls, y, X, group, Z=None, names=None):
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float).reshape(y.size, -1)
        group = np.asarray(group)
        _, inv = np.unique(group, return_inverse=True)
        order = np.argsort(inv, kind="stable")
        bounds = np.flatnonzero(np.diff(inv[order])) + 1
        parts = np.split(order, bounds)
        Zg = None if Z is None else [np.asarray(Z, dtype=float).reshape(y.size, -1)[ix] for ix in parts]
        return cls([(y[ix], X[ix]) for ix in parts], Zg, names=names)

    @property
    def n_groups(self):
        return self.sizes.size

    @property
    def n_obs(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Z.shape[1]

    def groups(self):
        bounds = np.cumsum(self.sizes)[:-1]
        return list(zip(np.split(self.y, bounds), np.split(self.X, bounds)))

    def with_response(self, y):
        """Same design, new responses (used by the Geweke data redraw)."""
        out = object.__new__(PanelDataset)
        out.__dict__.update(self.__dict__)
        out.y = np.asarray(y, dtype=float).copy()
        out.y.flags.writeable = False
        return out

    def take_groups(self, order):
        """Dataset with groups re-ordered (or subset) by ``order``."""
        gs = self.groups()
        bounds = np.cumsum(self.sizes)[:-1]
        zs = np.split(self.Z, bounds)
        return PanelDataset([gs[i] for i in order], [zs[i] for i in order], names=self.names)


class ModelKind(enum.Enum):
    LOCATION = "location"
    FIXED_EFFECTS = "fixed-effects"
    RANDOM_INTERCEPT = "random-intercept"


class GrowthModel(enum.Enum):
    """Submodels of the growth-curve analysis.

    M1 fixed effects only, normal errors; M2 random intercept, normal errors;
    M3 random intercept, symmetric mixture errors; M4 random intercept and
    slope, normal errors; M5 random intercept and slope, mixture errors.
    """

    M1 = (0, False)
    M2 = (1, False)
    M3 = (1, True)
    M4 = (2, False)
    M5 = (2, True)

    @property
    def n_random(self):
        return self.value[0]

    @property
    def sdp_errors(self):
        return self.value[1]


BERNOULLI_HALF, FROM_FILE = "bernoulli-half", "from-file"


@dataclass
class GenerativeConfig:
    beta0: Sequence[float] = (-1.0, 1.0)
    error: ErrorSpec | str = "E6"
    random_effect_sd: float = 0.85
    n_groups: int = 20
    group_size: int | Sequence[int] = 5
    covariates: str = BERNOULLI_HALF
    design: np.ndarray | None = field(default=None, repr=False)
    zero_covariates: bool = False

    def __post_init__(self):
        self.error = parse_error_spec(self.error)
        self.beta0 = np.asarray(self.beta0, dtype=float).reshape(-1)
        if self.random_effect_sd < 0:
            raise ParameterError("random-effect sd must be non-negative")
        if self.n_groups < 1:
            raise ParameterError("need at least one group")
        sizes = np.broadcast_to(np.asarray(self.group_size, dtype=np.int64), (self.n_groups,))
        if np.any(sizes < 1):
            raise ParameterError("group sizes must be at least one")
        self.sizes = sizes.copy()
        if self.covariates == FROM_FILE:
            if self.design is None or np.shape(self.design) != (self.sizes.sum(), self.beta0.size):
                raise ParameterError("from-file covariates need a design of shape (N, p)")
        elif self.covariates != BERNOULLI_HALF:
            raise ParameterError(f"unknown covariate law {self.covariates!r}")


def simulate_dataset(rng, cfg: GenerativeConfig) -> PanelDataset:
    """``Y_ij = beta0' X_ij + b_i + eps_ij`` with ``b_i ~ N(0, sd^2)`` and ``eps`` from ``cfg.error``."""
    gen = as_generator(rng)
    N, p = int(cfg.sizes.sum()), cfg.beta0.size
    if cfg.covariates == BERNOULLI_HALF:
        X = (gen.random((N, p)) < 0.5).astype(float)
    else:
        X = np.asarray(cfg.design, dtype=float)
    if cfg.zero_covariates:
        X = np.zeros((N, p))
    b = gen.normal(0.0, 1.0, cfg.n_groups) * cfg.random_effect_sd
    eps = error_sample(gen, cfg.error, N)
    group = np.repeat(np.arange(cfg.n_groups), cfg.sizes)
    y = X @ cfg.beta0 + b[group] + eps
    bounds = np.cumsum(cfg.sizes)[:-1]
    return PanelDataset(list(zip(np.split(y, bounds), np.split(X, bounds))))


def residuals(data: PanelDataset, beta, z=None, b=None):
    """``Y_ij - beta' X_ij - (Z_ij' b_i) - z_ij``; ``b`` may be (n,) or (n, q)."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != data.p:
        raise DimensionError(f"beta has {beta.size} entries, data has p={data.p}")
    r = data.y - data.X @ beta
    if b is not None:
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != data.n_groups or b.shape[1] > data.q:
            raise DimensionError(f"random effects of shape {b.shape} for {data.n_groups} groups, q={data.q}")
        r = r - np.einsum("ij,ij->i", data.Z[:, : b.shape[1]], b[data.group])
    if z is not None:
        z = np.asarray(z, dtype=float)
        if z.shape != r.shape:
            raise DimensionError(f"latent locations of shape {z.shape}, expected {r.shape}")
        r = r - z
    return r


def loglik_given_latents(data: PanelDataset, beta, sigma, z=None, b=None) -> float:
    """``sum_ij log phi_sigma(Y_ij - beta' X_ij - b_i - z_ij)``."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    r = residuals(data, beta, z, b)
    return float(-0.5 * np.sum((r / sigma) ** 2) - r.size * (math.log(sigma) + LOG_SQRT_2PI))


def location_dataset(y) -> PanelDataset:
    """Location model as regression on a single all-ones column, one observation per group."""
    y = np.asarray(y, dtype=float).reshape(-1)
    return PanelDataset([(np.array([v]), np.ones((1, 1))) for v in y], names=["theta"])


def fixed_effects_dataset(y, X) -> PanelDataset:
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(y.size, -1)
    return PanelDataset([(y[i : i + 1], X[i : i + 1]) for i in range(y.size)])


# ---------------------------------------------------------------------------
# growth data

GROWTH_COLUMNS = ("subject", "sex", "age", "distance")
GROWTH_NAMES = ["beta_0", "beta_1", "beta_2", "beta_3"]


def _parse_growth_rows(text, source):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{source}: empty file", line=1) from None
    header = [h.strip().lower() for h in header]
    if tuple(header) != GROWTH_COLUMNS:
        raise DataFormatError(f"{source}: expected header {','.join(GROWTH_COLUMNS)}, got {','.join(header)}", line=1)
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 4:
            raise DataFormatError(f"{source}: expected 4 fields, got {len(rec)}", line=lineno)
        subject = rec[0].strip()
        try:
            sex = int(rec[1])
            age = float(rec[2])
            dist = float(rec[3])
        except ValueError as exc:
            raise DataFormatError(f"{source}: {exc}", line=lineno) from None
        if sex not in (0, 1):
            raise DataFormatError(f"{source}: sex must be 0 (boy) or 1 (girl), got {sex}", line=lineno)
        if not (math.isfinite(age) and math.isfinite(dist)):
            raise DataFormatError(f"{source}: non-finite value", line=lineno)
        rows.append((subject, sex, age, dist))
    if not rows:
        raise DataFormatError(f"{source}: no data rows", line=2)
    return rows


def load_growth_data(path: str | Path | None = None) -> PanelDataset:
    """Load ``subject,sex,age,distance`` rows into the design
    ``[1, X_i, T_j, X_i T_j]`` with random-effect design ``[1, T_j]``.

    With no path, the bundled Potthoff-Roy orthodontic data are used.
    """
    if path is None:
        text = resources.files("sdpmix").joinpath("data/orthodont.csv").read_text()
        source = "orthodont.csv"
    else:
        text = Path(path).read_text()
        source = str(path)
    rows = _parse_growth_rows(text, source)
    subjects = list(dict.fromkeys(r[0] for r in rows))
    groups, zs = [], []
    for s in subjects:
        rs = [r for r in rows if r[0] == s]
        sexes = {r[1] for r in rs}
        if len(sexes) != 1:
            raise DataFormatError(f"{source}: subject {s} has inconsistent sex codes")
        x = float(rs[0][1])
        t = np.array([r[2] for r in rs])
        y = np.array([r[3] for r in rs])
        groups.append((y, np.column_stack([np.ones_like(t), np.full_like(t, x), t, x * t])))
        zs.append(np.column_stack([np.ones_like(t), t]))
    data = PanelDataset(groups, zs, names=GROWTH_NAMES)
    data.subjects = subjects
    return data
