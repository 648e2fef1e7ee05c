"""Symmetrized Dirichlet process: draws, conjugate updating, the Polya-urn
predictive law, and two Gibbs samplers for a normal location kernel with a
normal base measure.

A draw ``P ~ DP_S(alpha, P0)`` is the law of ``(Q + Q^-) / 2`` with
``Q ~ DP(alpha, P0)`` and ``Q^-(A) = Q(-A)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .distributions import LOG_SQRT_2PI, as_generator
from .exceptions import InvariantError, ParameterError

INTEGRATED, AUXILIARY = "integrated", "auxiliary"
EXACT_WEIGHTS, SIGNED_COUNT_WEIGHTS = "exact", "signed-counts"


@dataclass(frozen=True)
class SdpPrior:
    """``DP_S(concentration, G)`` with base ``G = (a0 N(0, base_sd^2) + sum_i delta_{atoms_i}) / concentration``.

    With no atoms this is the prior ``DP_S(alpha, N(0, tau^2))``; a conjugate
    update appends the observed values as atoms and adds their count to the
    concentration, so ``a0 = concentration - len(atoms)``.
    """

    concentration: float
    base_sd: float
    atoms: tuple = ()

    def __post_init__(self):
        if not (self.concentration > 0 and math.isfinite(self.concentration)):
            raise ParameterError(f"DP concentration must be positive, got {self.concentration!r}")
        if not (self.base_sd > 0 and math.isfinite(self.base_sd)):
            raise ParameterError(f"base sd must be positive, got {self.base_sd!r}")
        if self.base_concentration <= 0:
            raise ParameterError("concentration must exceed the number of base atoms")

    @property
    def base_concentration(self):
        return self.concentration - len(self.atoms)

    def sample_base(self, gen, size):
        """Draw from the base measure ``G`` (continuous part mixed with atoms)."""
        out = gen.normal(0.0, self.base_sd, size)
        if self.atoms:
            atoms = np.asarray(self.atoms, dtype=float)
            pick = gen.random(size) * self.concentration
            hit = pick < len(atoms)
            out[hit] = atoms[pick[hit].astype(np.int64)]
        return out


@dataclass
class SymmetricMixingMeasure:
    """Finite symmetric atomic measure.

    Atom ``c`` stands for the mirrored pair ``{+z_c, -z_c}`` carrying
    ``w_c / 2`` each; a zero location is a single atom of mass ``w_c``.
    ``remainder_mass`` is the stick left over by truncation.
    """

    locations: np.ndarray
    weights: np.ndarray
    remainder_mass: float = 0.0

    def __post_init__(self):
        self.locations = np.abs(np.asarray(self.locations, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        total = self.weights.sum() + self.remainder_mass
        if abs(total - 1.0) > 1e-12:
            raise InvariantError(f"atom weights plus remainder sum to {total!r}")

    def __len__(self):
        return self.locations.size

    def density(self, x, sigma=1.0):
        """``sum_c (w_c / 2) (phi_sigma(x - z_c) + phi_sigma(x + z_c))``."""
        xa = np.abs(np.asarray(x, dtype=float))[..., None]
        z = self.locations
        k = np.exp(-0.5 * ((xa - z) / sigma) ** 2) + np.exp(-0.5 * ((xa + z) / sigma) ** 2)
        out = (k * (0.5 * self.weights)).sum(axis=-1) / (sigma * math.sqrt(2.0 * math.pi))
        return float(out) if np.ndim(x) == 0 else out

    def sample(self, rng, size):
        """Locations drawn from the normalized atoms (the truncation tail is dropped)."""
        gen = as_generator(rng)
        cdf = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, gen.random(size) * cdf[-1], side="right"), cdf.size - 1)
        sign = np.where(gen.random(size) < 0.5, 1.0, -1.0)
        return sign * self.locations[idx]


def default_truncation(concentration, eps=1e-8):
    """``ceil(10 + 4 alpha log(1/eps))``; the expected tail ``(alpha/(1+alpha))^K`` is below ``eps``."""
    return int(math.ceil(10 + 4.0 * concentration * math.log(1.0 / eps)))


def stick_breaking_sample(rng, prior: SdpPrior, truncation: int | None = None) -> SymmetricMixingMeasure:
    gen = as_generator(rng)
    K = default_truncation(prior.concentration) if truncation is None else int(truncation)
    if K < 1:
        raise ParameterError("truncation must be at least 1")
    v = gen.beta(1.0, prior.concentration, K)
    with np.errstate(divide="ignore"):  # v == 1 leaves nothing of the stick
        log_left = np.concatenate(([0.0], np.cumsum(np.log1p(-v))))
    weights = v * np.exp(log_left[:-1])
    remainder = float(np.exp(log_left[-1]))
    # absorb the roundoff so the stored masses sum to one
    weights[-1] = max(0.0, 1.0 - remainder - weights[:-1].sum())
    return SymmetricMixingMeasure(prior.sample_base(gen, K), weights, remainder)


def sdp_posterior(prior: SdpPrior, observations) -> SdpPrior:
    """Conjugate update: ``DP_S(alpha + n, (alpha P0 + sum delta_theta_i) / (alpha + n))``."""
    obs = tuple(float(t) for t in np.ravel(observations))
    if not obs:
        return prior
    return SdpPrior(prior.concentration + len(obs), prior.base_sd, prior.atoms + obs)


@dataclass(frozen=True)
class PredictiveLaw:
    """Mixture of ``N(0, base_sd^2)`` (mass ``base_mass``) and point masses.

    ``atoms`` holds ``(location, mass)`` pairs sorted by location with equal
    locations merged.
    """

    base_mass: float
    base_sd: float
    atoms: tuple = field(default=())

    def total(self):
        return self.base_mass + sum(m for _, m in self.atoms)

    def rows(self):
        out = [("base", math.nan, self.base_mass)]
        out += [("atom", z, m) for z, m in self.atoms]
        return out


def predictive_weights(prior: SdpPrior, past=()) -> PredictiveLaw:
    """Law of the next draw given past draws.

    ``alpha/(2(alpha+n)) (P0 + P0^-) + 1/(2(alpha+n)) sum_i (delta_theta_i + delta_-theta_i)``;
    since ``P0`` is centred normal, its two halves are merged into one base term.
    """
    post = sdp_posterior(prior, past)
    a = post.concentration
    masses: dict[float, float] = {}
    for t in post.atoms:
        for loc in (abs(t), -abs(t)):
            loc = loc + 0.0  # fold -0.0 into 0.0
            masses[loc] = masses.get(loc, 0.0) + 0.5 / a
    return PredictiveLaw(post.base_concentration / a, post.base_sd, tuple(sorted(masses.items())))


def sample_predictive(rng, law: PredictiveLaw, size):
    gen = as_generator(rng)
    locs = np.array([z for z, _ in law.atoms])
    cdf = np.cumsum([law.base_mass] + [m for _, m in law.atoms])
    idx = np.minimum(np.searchsorted(cdf, gen.random(size) * cdf[-1], side="right"), cdf.size - 1)
    out = gen.normal(0.0, law.base_sd, size)
    hit = idx > 0
    out[hit] = locs[idx[hit] - 1]
    return out


# ---------------------------------------------------------------------------
# Algorithm with theta_i sampled directly


def _log_phi(x, sd):
    return -0.5 * (x / sd) ** 2 - math.log(sd) - LOG_SQRT_2PI


def gibbs_direct_sweep(rng, theta, x, sigma, prior: SdpPrior, likelihood="normal"):
    """One sweep of the sampler that draws each ``theta_i`` from its full conditional

    ``r_i H_i + sum_{j != i} (f_{theta_j}(x_i) delta_{theta_j} + f_{-theta_j}(x_i) delta_{-theta_j})``

    with ``r_i = 2 alpha phi_{sqrt(sigma^2 + tau^2)}(x_i)`` and ``H_i`` the
    normal posterior from a single observation. ``likelihood="flat"`` replaces
    the kernel by a constant (prior-only chain).
    """
    if not sigma > 0:
        raise ParameterError("kernel sd must be positive")
    if prior.atoms:
        raise ParameterError("the direct sampler needs a prior with a purely normal base")
    gen = as_generator(rng)
    theta = np.array(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    n = theta.size
    tau2, s2 = prior.base_sd ** 2, sigma ** 2
    post_var = tau2 * s2 / (tau2 + s2)
    log2a = math.log(2.0 * prior.concentration)
    flat = likelihood == "flat"
    for i in range(n):
        others = np.delete(theta, i)
        if flat:
            lw_fresh = log2a
            lw_atoms = np.zeros(2 * others.size)
        else:
            lw_fresh = log2a + _log_phi(x[i], math.sqrt(s2 + tau2))
            lw_atoms = np.concatenate((_log_phi(x[i] - others, sigma), _log_phi(x[i] + others, sigma)))
        lw = np.concatenate(([lw_fresh], lw_atoms))
        p = np.exp(lw - lw.max())
        k = np.searchsorted(np.cumsum(p), gen.random() * p.sum(), side="right")
        if k == 0 or k > lw_atoms.size:
            if flat:
                theta[i] = gen.normal(0.0, prior.base_sd)
            else:
                theta[i] = gen.normal(tau2 * x[i] / (tau2 + s2), math.sqrt(post_var))
        elif k <= others.size:
            theta[i] = others[k - 1]
        else:
            theta[i] = -others[k - 1 - others.size]
    return theta


# ---------------------------------------------------------------------------
# Algorithm with class labels, signs and class locations


class ClassAssignment:
    """Labels ``c``, signs ``s`` and class locations ``vartheta`` for ``n`` observations.

    ``theta`` is a buffer of length ``n + 1``; only the first ``n_classes``
    entries are live. Classes are kept contiguous ``0..n_classes-1``.
    """

    def __init__(self, labels, signs, locations):
        labels = np.asarray(labels, dtype=np.int64)
        self.labels = labels.copy()
        self.signs = np.asarray(signs, dtype=np.int64).copy()
        loc = np.asarray(locations, dtype=float)
        self.n_classes = loc.size
        self.theta = np.zeros(labels.size + 1)
        self.theta[: loc.size] = loc
        self.check()

    @classmethod
    def single_class(cls, n, location=0.0):
        return cls(np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64), [location])

    @property
    def n(self):
        return self.labels.size

    @property
    def locations(self):
        return self.theta[: self.n_classes]

    def counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def signed_counts(self):
        pos = np.bincount(self.labels, weights=(self.signs > 0), minlength=self.n_classes)
        return pos.astype(np.int64), self.counts() - pos.astype(np.int64)

    def z(self):
        """Latent locations ``z_ij = s_ij * vartheta_{c_ij}``."""
        return self.signs * self.theta[self.labels]

    def copy(self):
        return ClassAssignment(self.labels, self.signs, self.locations)

    def check(self):
        if self.n_classes > self.n + 1 or (self.n and self.n_classes < 1):
            raise InvariantError(f"{self.n_classes} classes for {self.n} observations")
        if self.n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InvariantError("label outside the live class range")
        if not np.all(np.abs(self.signs) == 1):
            raise InvariantError("signs must be +1 or -1")
        counts = self.counts()
        if counts.sum() != self.n or (self.n and np.any(counts == 0)):
            raise InvariantError(f"class counts {counts.tolist()} inconsistent with {self.n} observations")


@numba.njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf and b == -np.inf:
        return -np.inf
    m = max(a, b)
    return m + math.log1p(math.exp(min(a, b) - m))


@numba.njit(cache=True)
def class_log_weights(e, npos, nneg, theta, K, sigma, tau, alpha, z_aux, aux_mode, signed_counts):
    """Unnormalized log-probabilities of the ``K`` existing classes followed by
    the new-class option, for one residual ``e``.

    Counts exclude the observation being updated. The exact conditional
    (signs marginalised) is ``n_c (phi(e - v_c) + phi(e + v_c))`` against
    ``2 alpha phi_{sqrt(sigma^2 + tau^2)}(e)``; ``signed_counts`` switches the
    existing-class term to ``n+_c phi(e - v_c) + n-_c phi(e + v_c)``.
    """
    out = np.empty(K + 1)
    c0 = -math.log(sigma) - 0.9189385332046728
    for c in range(K):
        v = theta[c]
        lm = -0.5 * ((e - v) / sigma) ** 2 + c0
        lp = -0.5 * ((e + v) / sigma) ** 2 + c0
        if signed_counts:
            a = math.log(npos[c]) + lm if npos[c] > 0 else -np.inf
            b = math.log(nneg[c]) + lp if nneg[c] > 0 else -np.inf
            out[c] = _logaddexp(a, b)
        else:
            out[c] = math.log(npos[c] + nneg[c]) + _logaddexp(lm, lp)
    if aux_mode:
        out[K] = math.log(2.0 * alpha) - 0.5 * ((e - z_aux) / sigma) ** 2 + c0
    else:
        sm = math.sqrt(sigma * sigma + tau * tau)
        out[K] = math.log(2.0 * alpha) - 0.5 * (e / sm) ** 2 - math.log(sm) - 0.9189385332046728
    return out


@numba.njit(cache=True)
def _remove_class(k, K, labels, theta, npos, nneg):
    last = K - 1
    if k != last:
        theta[k] = theta[last]
        npos[k] = npos[last]
        nneg[k] = nneg[last]
        for j in range(labels.size):
            if labels[j] == last:
                labels[j] = k
    npos[last] = 0
    nneg[last] = 0
    return last


@numba.njit(cache=True)
def _class_sweep_kernel(e, labels, signs, theta, npos, nneg, K, sigma, tau, alpha,
                        aux_mode, signed_counts, U, G):
    n = e.size
    s2 = sigma * sigma
    t2 = tau * tau
    h_scale = math.sqrt(t2 * s2 / (t2 + s2))
    h_shrink = t2 / (t2 + s2)
    for i in range(n):
        k = labels[i]
        if signs[i] > 0:
            npos[k] -= 1
        else:
            nneg[k] -= 1
        z_aux = tau * G[i, 0]
        if npos[k] + nneg[k] == 0:
            z_aux = signs[i] * theta[k]
            K = _remove_class(k, K, labels, theta, npos, nneg)
        lw = class_log_weights(e[i], npos, nneg, theta, K, sigma, tau, alpha, z_aux,
                               aux_mode, signed_counts)
        top = lw.max()
        total = 0.0
        for c in range(K + 1):
            lw[c] = math.exp(lw[c] - top)
            total += lw[c]
        u = U[i, 0] * total
        acc = 0.0
        pick = K
        for c in range(K + 1):
            acc += lw[c]
            if u < acc:
                pick = c
                break
        if pick == K:
            s_new = 1 if U[i, 1] < 0.5 else -1
            theta[K] = h_shrink * s_new * e[i] + h_scale * G[i, 1]
            K += 1
        labels[i] = pick
        v = theta[pick]
        p_plus = 1.0 / (1.0 + math.exp(-2.0 * e[i] * v / s2))
        if U[i, 2] < p_plus:
            signs[i] = 1
            npos[pick] += 1
        else:
            signs[i] = -1
            nneg[pick] += 1
    return K


def update_class_locations(gen, assign: ClassAssignment, e, sigma, tau):
    """Resample every ``vartheta_c ~ N(tau^2 S_c / (n_c tau^2 + sigma^2), tau^2 sigma^2 / (n_c tau^2 + sigma^2))``
    with ``S_c = sum_{c_ij = c} s_ij e_ij``."""
    K = assign.n_classes
    n_c = np.bincount(assign.labels, minlength=K)
    se = np.bincount(assign.labels, weights=assign.signs * e, minlength=K)
    t2, s2 = tau * tau, sigma * sigma
    denom = n_c * t2 + s2
    assign.theta[:K] = t2 * se / denom + np.sqrt(t2 * s2 / denom) * gen.standard_normal(K)


def gibbs_class_sweep(rng, assign: ClassAssignment, residuals, sigma, prior: SdpPrior,
                      new_cluster_mode=INTEGRATED, label_weights=EXACT_WEIGHTS,
                      update_locations=True, check=False) -> ClassAssignment:
    """One sweep over labels and signs followed by a class-location refresh.

    Updates ``assign`` in place and returns it. ``new_cluster_mode`` selects
    the new-class weight: ``"integrated"`` uses the exact normal marginal,
    ``"auxiliary"`` a single prior draw of the new location.
    """
    if not sigma > 0:
        raise ParameterError("kernel sd must be positive")
    if new_cluster_mode not in (INTEGRATED, AUXILIARY):
        raise ParameterError(f"unknown new-cluster mode {new_cluster_mode!r}")
    if label_weights not in (EXACT_WEIGHTS, SIGNED_COUNT_WEIGHTS):
        raise ParameterError(f"unknown label weighting {label_weights!r}")
    e = np.ascontiguousarray(residuals, dtype=float)
    n = e.size
    if n != assign.n:
        raise InvariantError(f"{n} residuals for {assign.n} labelled observations")
    gen = as_generator(rng)
    npos = np.zeros(n + 1, dtype=np.int64)
    nneg = np.zeros(n + 1, dtype=np.int64)
    pos, neg = assign.signed_counts()
    npos[: pos.size] = pos
    nneg[: neg.size] = neg
    U = gen.random((n, 3))
    G = gen.standard_normal((n, 2))
    assign.n_classes = int(_class_sweep_kernel(
        e, assign.labels, assign.signs, assign.theta, npos, nneg, assign.n_classes,
        float(sigma), float(prior.base_sd), float(prior.concentration),
        new_cluster_mode == AUXILIARY, label_weights == SIGNED_COUNT_WEIGHTS, U, G))
    if update_locations:
        update_class_locations(gen, assign, e, sigma, prior.base_sd)
    if check:
        assign.check()
    return assign


def sample_prior_assignment(rng, n, prior: SdpPrior) -> ClassAssignment:
    """Draw labels from the Chinese restaurant process, fair signs and
    ``vartheta_c ~ N(0, tau^2)``."""
    gen = as_generator(rng)
    labels = np.zeros(n, dtype=np.int64)
    counts = []
    alpha = prior.concentration
    for i in range(n):
        u = gen.random() * (i + alpha)
        acc, pick = 0.0, len(counts)
        for c, nc in enumerate(counts):
            acc += nc
            if u < acc:
                pick = c
                break
        if pick == len(counts):
            counts.append(0)
        counts[pick] += 1
        labels[i] = pick
    signs = np.where(gen.random(n) < 0.5, 1, -1)
    locations = gen.normal(0.0, prior.base_sd, len(counts)) if n else np.zeros(0)
    if n == 0:
        return ClassAssignment(labels, signs, np.zeros(0))
    return ClassAssignment(labels, signs, locations)
