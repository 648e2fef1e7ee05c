"""Gibbs sampler for the random-intercept regression with symmetrized-DP
location-mixture errors, and its normal-error reductions.

One cycle updates, in order: (i) beta, (ii) sigma^2, (iii) random effects,
(iv) random-effect variances, (v) latent classes, signs and class locations.
Variant B3 runs all five steps, B2 fixes the latent locations at zero and B1
additionally drops the random effects.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import sdp
from .distributions import InverseGamma, RngStream, as_generator
from .exceptions import ConfigurationError, DimensionError, InvariantError, ParameterError
from .models import PanelDataset


@dataclass(frozen=True)
class PriorConfig:
    """``beta ~ N(0, tau0_sq I)``, ``sigma^2 ~ IG(alpha0, lambda0)``,
    ``F ~ DP_S(sdp.concentration, N(0, sdp.base_sd^2))`` and
    ``sigma_b^2 ~ IG(alpha1, lambda1)`` (per random-effect component)."""

    tau0_sq: float = 100.0
    alpha0: float = 1.0
    lambda0: float = 1.0
    alpha1: float = 1.0
    lambda1: float = 1.0
    sdp: sdp.SdpPrior = field(default_factory=lambda: sdp.SdpPrior(1.0, 3.0))

    def __post_init__(self):
        for name in ("tau0_sq", "alpha0", "lambda0", "alpha1", "lambda1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"prior hyperparameter {name} must be positive, got {v!r}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        alpha = d.pop("dp_concentration", 1.0)
        tau1 = d.pop("tau1", 3.0)
        return cls(sdp=sdp.SdpPrior(float(alpha), float(tau1)), **{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 6000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1:
            raise ParameterError("iterations and thin must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ParameterError("burn_in must satisfy 0 <= burn_in < iterations")

    @property
    def n_retained(self):
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class ModelSpec:
    sdp_errors: bool
    n_random: int

    def __post_init__(self):
        if self.n_random not in (0, 1, 2):
            raise ConfigurationError("between zero and two random-effect components are supported")


VARIANTS = {
    "B1": ModelSpec(sdp_errors=False, n_random=0),
    "B2": ModelSpec(sdp_errors=False, n_random=1),
    "B3": ModelSpec(sdp_errors=True, n_random=1),
}


def resolve_variant(variant) -> ModelSpec:
    if isinstance(variant, ModelSpec):
        return variant
    try:
        return VARIANTS[str(variant).upper()]
    except KeyError:
        raise ConfigurationError(f"unknown sampler variant {variant!r}") from None


@dataclass
class ChainState:
    beta: np.ndarray
    sigma2: float
    b: np.ndarray  # (n_groups, q)
    sigma_b2: np.ndarray  # (q,)
    assign: sdp.ClassAssignment | None = None

    def z(self, n_obs):
        if self.assign is None:
            return np.zeros(n_obs)
        return self.assign.z()

    def copy(self):
        return ChainState(self.beta.copy(), self.sigma2, self.b.copy(), self.sigma_b2.copy(),
                          None if self.assign is None else self.assign.copy())

    def check(self):
        if not self.sigma2 > 0 or np.any(self.sigma_b2 <= 0):
            raise InvariantError("variances must stay positive")
        if self.assign is not None:
            self.assign.check()


class _Design:
    """Per-dataset quantities reused by every sweep."""

    def __init__(self, data: PanelDataset, q: int):
        if q > data.q:
            raise ConfigurationError(f"{q} random-effect components requested but the data carry {data.q}")
        self.data = data
        self.q = q
        self.XtX = data.X.T @ data.X
        self.Z = np.ascontiguousarray(data.Z[:, :q])
        g = data.group
        self.ZtZ = np.zeros((data.n_groups, q, q))
        for a in range(q):
            for c in range(q):
                self.ZtZ[:, a, c] = np.bincount(g, weights=self.Z[:, a] * self.Z[:, c], minlength=data.n_groups)

    def random_part(self, b):
        if self.q == 0:
            return 0.0
        if self.q == 1:
            return self.Z[:, 0] * b[self.data.group, 0]
        return np.einsum("ij,ij->i", self.Z, b[self.data.group])


# ---------------------------------------------------------------------------
# conditional laws


def beta_conditional(state: ChainState, data: PanelDataset, priors: PriorConfig, design=None):
    """Mean and covariance of ``beta | sigma, z, b``:

    ``mu = tau0^2 A^{-1} sum (Y - z - b) X`` and ``Sigma = tau0^2 sigma^2 A^{-1}``
    with ``A = sigma^2 I + tau0^2 sum X X'``.
    """
    d = design or _Design(data, state.b.shape[1])
    r = data.y - state.z(data.n_obs) - d.random_part(state.b)
    A = state.sigma2 * np.eye(data.p) + priors.tau0_sq * d.XtX
    cf = cho_factor(A, lower=True)
    mu = priors.tau0_sq * cho_solve(cf, data.X.T @ r)
    return mu, priors.tau0_sq * state.sigma2 * cho_solve(cf, np.eye(data.p)), cf


def update_beta(rng, state, data, priors, design=None):
    gen = as_generator(rng)
    mu, _, (L, _) = beta_conditional(state, data, priors, design)
    xi = gen.standard_normal(data.p)
    return mu + math.sqrt(priors.tau0_sq * state.sigma2) * solve_triangular(L, xi, lower=True, trans="T")


def sigma2_conditional(state, data, priors, design=None) -> InverseGamma:
    d = design or _Design(data, state.b.shape[1])
    r = data.y - data.X @ state.beta - state.z(data.n_obs) - d.random_part(state.b)
    return InverseGamma(priors.alpha0 + 0.5 * data.n_obs, priors.lambda0 + 0.5 * float(r @ r))


def update_sigma2(rng, state, data, priors, design=None):
    return sigma2_conditional(state, data, priors, design).draw(as_generator(rng))


def random_effects_conditional(state, data, design=None):
    """Per-group precision ``Z_i'Z_i / sigma^2 + diag(1 / sigma_b^2)`` and mean.

    For a single intercept this is
    ``N(sigma_b^2 / (sigma^2 + m_i sigma_b^2) sum_j r_ij, sigma^2 sigma_b^2 / (sigma^2 + m_i sigma_b^2))``.
    Returns ``(mean (n, q), precision (n, q, q))``.
    """
    d = design or _Design(data, state.b.shape[1])
    q = d.q
    r = data.y - data.X @ state.beta - state.z(data.n_obs)
    n = data.n_groups
    Ztr = np.empty((n, q))
    for a in range(q):
        Ztr[:, a] = np.bincount(data.group, weights=d.Z[:, a] * r, minlength=n)
    prec = d.ZtZ / state.sigma2 + np.diag(1.0 / state.sigma_b2)[None, :, :]
    if q == 1:
        sb2 = state.sigma_b2[0]
        mean = (sb2 / (state.sigma2 + d.ZtZ[:, 0, 0] * sb2) * Ztr[:, 0])[:, None]
    else:
        mean = np.linalg.solve(prec, Ztr[:, :, None] / state.sigma2)[:, :, 0]
    return mean, prec


def update_random_effects(rng, state, data, design=None):
    gen = as_generator(rng)
    mean, prec = random_effects_conditional(state, data, design)
    n, q = mean.shape
    if q == 0:
        return np.zeros((n, 0))
    xi = gen.standard_normal((n, q))
    if q == 1:
        return mean + xi / np.sqrt(prec[:, 0, :])
    L = np.linalg.cholesky(prec)
    # L^{-T} xi has covariance prec^{-1}
    return mean + np.linalg.solve(np.swapaxes(L, 1, 2), xi[:, :, None])[:, :, 0]


def sigma_b2_conditional(state, priors):
    n = state.b.shape[0]
    if n == 0:
        raise DimensionError("no groups to update the random-effect variance from")
    ss = (state.b ** 2).sum(axis=0)
    return [InverseGamma(priors.alpha1 + 0.5 * n, priors.lambda1 + 0.5 * s) for s in ss]


def update_sigma_b2(rng, state, priors):
    gen = as_generator(rng)
    return np.array([law.draw(gen) for law in sigma_b2_conditional(state, priors)])


def latent_residuals(state, data, design=None):
    """``e_ij = Y_ij - beta' X_ij - b_i``."""
    d = design or _Design(data, state.b.shape[1])
    return data.y - data.X @ state.beta - d.random_part(state.b)


def update_latent_classes(rng, state, data, priors, mode=sdp.INTEGRATED,
                          label_weights=sdp.EXACT_WEIGHTS, design=None):
    e = latent_residuals(state, data, design)
    return sdp.gibbs_class_sweep(rng, state.assign, e, math.sqrt(state.sigma2), priors.sdp,
                                 new_cluster_mode=mode, label_weights=label_weights)


# ---------------------------------------------------------------------------
# the chain


class GibbsSampler:
    """Holds a dataset, priors and model structure; ``cycle`` performs one
    (i)-(v) sweep on a :class:`ChainState` in place."""

    def __init__(self, data: PanelDataset, priors: PriorConfig | None = None, variant="B3",
                 new_cluster_mode=sdp.INTEGRATED, label_weights=sdp.EXACT_WEIGHTS,
                 freeze_classes=False):
        self.data = data
        self.priors = priors or PriorConfig()
        self.spec = resolve_variant(variant)
        self.design = _Design(data, self.spec.n_random)
        self.new_cluster_mode = new_cluster_mode
        self.label_weights = label_weights
        self.freeze_classes = freeze_classes

    def initial_state(self) -> ChainState:
        data = self.data
        beta, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
        r = data.y - data.X @ beta
        sigma2 = max(float(r @ r) / data.n_obs, 1e-3)
        q = self.spec.n_random
        assign = sdp.ClassAssignment.single_class(data.n_obs) if self.spec.sdp_errors else None
        return ChainState(beta, sigma2, np.zeros((data.n_groups, q)), np.ones(q), assign)

    def cycle(self, gen, state: ChainState):
        data, priors, d = self.data, self.priors, self.design
        state.beta = update_beta(gen, state, data, priors, d)
        state.sigma2 = update_sigma2(gen, state, data, priors, d)
        if d.q:
            state.b = update_random_effects(gen, state, data, d)
            state.sigma_b2 = update_sigma_b2(gen, state, priors)
        if state.assign is not None and not self.freeze_classes:
            update_latent_classes(gen, state, data, priors, self.new_cluster_mode, self.label_weights, d)
        return state

    def parameter_names(self):
        names = list(self.data.names) + ["sigma2", "sigma"]
        q = self.spec.n_random
        if q == 1:
            names += ["sigma_b2", "sigma_b"]
        elif q == 2:
            names += ["sigma_b1_sq", "sigma_b2_sq", "sigma_b1", "sigma_b2"]
        return names

    def flatten(self, state):
        return np.concatenate((state.beta, [state.sigma2, math.sqrt(state.sigma2)],
                               state.sigma_b2, np.sqrt(state.sigma_b2)))


@dataclass
class PosteriorSummary:
    """Mean, sd, median and central 95% interval of each monitored quantity,
    computed from the retained (post burn-in, thinned) draws."""

    names: list
    draws: np.ndarray
    n_classes: np.ndarray | None = None
    variant: str = ""
    mean: np.ndarray = field(init=False)
    sd: np.ndarray = field(init=False)
    median: np.ndarray = field(init=False)
    q025: np.ndarray = field(init=False)
    q975: np.ndarray = field(init=False)

    def __post_init__(self):
        d = self.draws
        self.mean = d.mean(axis=0)
        self.sd = d.std(axis=0, ddof=1) if d.shape[0] > 1 else np.zeros(d.shape[1])
        self.q025, self.median, self.q975 = np.quantile(d, [0.025, 0.5, 0.975], axis=0)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"{name!r} not among {self.names}") from None

    def __getitem__(self, name):
        return self.draws[:, self.index(name)]

    def row(self, name):
        k = self.index(name)
        return {"parameter": name, "mean": self.mean[k], "sd": self.sd[k], "median": self.median[k],
                "q025": self.q025[k], "q975": self.q975[k]}

    def rows(self, names=None):
        return [self.row(n) for n in (names or self.names)]

    @property
    def beta_mean(self):
        p = sum(1 for n in self.names if n not in _VARIANCE_NAMES)
        return self.mean[:p]


_VARIANCE_NAMES = {"sigma2", "sigma", "sigma_b2", "sigma_b", "sigma_b1_sq", "sigma_b2_sq", "sigma_b1", "sigma_b2"}


def run_chain(data: PanelDataset, priors: PriorConfig | None = None, chain: ChainConfig | None = None,
              variant="B3", *, new_cluster_mode=sdp.INTEGRATED, label_weights=sdp.EXACT_WEIGHTS,
              report_random_effects: bool | None = None, freeze_classes=False,
              rng=None, init: ChainState | None = None, draw_log: str | Path | None = None) -> PosteriorSummary:
    """Run one chain and summarise the retained draws.

    ``report_random_effects=True`` with a variant that has no random effects is
    a configuration error; ``freeze_classes`` pins the latent errors to the
    initial single class at zero (test harness for the B2 reduction).
    """
    chain = chain or ChainConfig()
    spec = resolve_variant(variant)
    if report_random_effects and spec.n_random == 0:
        raise ConfigurationError(f"variant {variant} has no random effects to report")
    if data.n_groups == 0:
        raise DimensionError("empty dataset")
    sampler = GibbsSampler(data, priors, spec, new_cluster_mode, label_weights, freeze_classes)
    gen = as_generator(rng) if rng is not None else RngStream(chain.seed, chain.stream_id).gen
    state = init.copy() if init is not None else sampler.initial_state()
    keep = range(chain.burn_in, chain.iterations, chain.thin)
    out = np.empty((len(keep), len(sampler.parameter_names())))
    ncls = np.zeros(len(keep), dtype=np.int64)
    k = 0
    for it in range(chain.iterations):
        sampler.cycle(gen, state)
        if it >= chain.burn_in and (it - chain.burn_in) % chain.thin == 0:
            out[k] = sampler.flatten(state)
            ncls[k] = state.assign.n_classes if state.assign is not None else 0
            k += 1
    summary = PosteriorSummary(sampler.parameter_names(), out, ncls,
                               variant if isinstance(variant, str) else "")
    if draw_log is not None:
        write_draw_log(draw_log, summary, data.p, spec.n_random, list(keep))
    summary.final_state = state
    return summary


def write_draw_log(path, summary: PosteriorSummary, p, q, iterations):
    """CSV ``iter,beta_1..beta_p,sigma2,sigma_b2,n_classes``; with two random
    effects the variance column is split into ``sigma_b1_sq,sigma_b2_sq``.
    Absent random effects leave ``sigma_b2`` empty."""
    var_cols = ["sigma_b1_sq", "sigma_b2_sq"] if q == 2 else ["sigma_b2"]
    header = ["iter"] + [f"beta_{k + 1}" for k in range(p)] + ["sigma2"] + var_cols + ["n_classes"]
    beta = summary.draws[:, :p]
    s2 = summary["sigma2"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, it in enumerate(iterations):
            vs = [repr(float(summary[c][k])) for c in var_cols] if q else [""]
            w.writerow([it + 1, *map(lambda v: repr(float(v)), beta[k]), repr(float(s2[k])), *vs,
                        int(summary.n_classes[k])])
