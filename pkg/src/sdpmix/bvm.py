"""Frequentist quantities behind the Gaussian posterior limit, and checks of
a sampled posterior against that limit.

For a symmetric normal-mixture error density ``p`` the score of the location
is ``-p'(x)/p(x)``; its second moment is the Fisher information. In the
regression model the limit of ``sqrt(n)(beta - beta0)`` is
``N(Delta_n, V_n^{-1})`` with ``V_n = I * mean(X X')`` and
``Delta_n = n^{-1/2} sum V_n^{-1} score(Y_i - beta0' X_i) X_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .distributions import ErrorSpec, as_generator
from .exceptions import DimensionError, ParameterError, QuadratureError, SingularDesignError
from .models import PanelDataset

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrueErrorModel:
    """``p(x) = sum_k w_k (phi_s(x - z_k) + phi_s(x + z_k))`` with ``2 sum w = 1``."""

    centers: tuple
    weights: tuple
    sigma: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.centers) != w.size or w.size == 0:
            raise ParameterError("centers and weights must have equal, non-zero length")
        if np.any(w < 0) or abs(2 * w.sum() - 1) > 1e-9:
            raise ParameterError("mirrored weights must satisfy 2 * sum(w) == 1")
        if not self.sigma > 0:
            raise ParameterError("component sd must be positive")

    @classmethod
    def from_error_spec(cls, spec: ErrorSpec):
        if spec.is_mixture:
            return cls(tuple(spec.centers), tuple(spec.weights), spec.sd)
        if spec.kind == "normal":
            return cls((0.0,), (0.5,), 1.0)
        raise ParameterError(f"error law {spec.label} is not a normal location mixture")

    @classmethod
    def normal(cls, sd=1.0):
        return cls((0.0,), (0.5,), float(sd))

    def scaled(self, factor):
        return TrueErrorModel(tuple(factor * z for z in self.centers), self.weights, factor * self.sigma)

    @property
    def support_radius(self):
        return max(abs(z) for z in self.centers) + 12.0 * self.sigma

    def _terms(self, x):
        # mirrored pairs evaluated together so that p(-x) and score(-x) mirror p(x), score(x) exactly
        x = np.asarray(x, dtype=float)[..., None]
        z = np.asarray(self.centers, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        s = self.sigma
        um, up = (x - z) / s, (x + z) / s
        lm, lp = -0.5 * um * um, -0.5 * up * up
        top = np.maximum(np.max(lm, axis=-1), np.max(lp, axis=-1))[..., None]
        a, b = np.exp(lm - top), np.exp(lp - top)
        dens = (w * (a + b)).sum(axis=-1)
        num = (w * (a * um + b * up)).sum(axis=-1)
        return dens, num, top[..., 0]

    def log_density(self, x):
        dens, _, top = self._terms(x)
        out = np.log(dens) + top - math.log(self.sigma) - _LOG_SQRT_2PI
        return float(out) if np.ndim(x) == 0 else out

    def density(self, x):
        return np.exp(self.log_density(x))

    def score(self, x):
        """``-p'(x)/p(x)``."""
        dens, num, _ = self._terms(x)
        out = num / dens / self.sigma
        return float(out) if np.ndim(x) == 0 else out

    def sample(self, rng, size):
        gen = as_generator(rng)
        probs = 2.0 * np.asarray(self.weights)
        k = gen.choice(probs.size, size=size, p=probs / probs.sum())
        sign = np.where(gen.random(size) < 0.5, 1.0, -1.0)
        return sign * np.asarray(self.centers)[k] + self.sigma * gen.standard_normal(size)


def score(model: TrueErrorModel, x):
    return model.score(x)


def _quad(fn, model, truth, rel_tol):
    if not rel_tol > 0:
        raise ParameterError("relative tolerance must be positive")
    L = max(model.support_radius, truth.support_radius)
    # symmetric integrand: integrate the right half and double it
    brk = sorted({abs(float(z)) for z in truth.centers if 0 < abs(z) < L})
    val, err = integrate.quad(fn, 0.0, L, points=brk or None, epsabs=0.0, epsrel=max(rel_tol * 1e-2, 1e-13), limit=500)
    if not err <= rel_tol * abs(val) + 1e-300:
        raise QuadratureError(f"quadrature error estimate {err:.3g} exceeds relative target {rel_tol:g}", abserr=2 * err)
    return 2.0 * val


def fisher_info(model: TrueErrorModel, rel_tol=1e-8) -> float:
    """``int score(x)^2 p(x) dx`` by adaptive Gauss-Kronrod quadrature."""
    return _quad(lambda x: model.score(x) ** 2 * model.density(x), model, model, rel_tol)


def cross_info(model: TrueErrorModel, truth: TrueErrorModel, rel_tol=1e-8) -> float:
    """``int l'_model(x) l'_truth(x) p_truth(x) dx``."""
    return _quad(lambda x: model.score(x) * truth.score(x) * truth.density(x), model, truth, rel_tol)


def misspecified_info(model: TrueErrorModel, truth: TrueErrorModel, rel_tol=1e-8) -> float:
    """``int l'_model(x)^2 p_truth(x) dx``."""
    return _quad(lambda x: model.score(x) ** 2 * truth.density(x), model, truth, rel_tol)


# ---------------------------------------------------------------------------
# random-intercept group density


def group_log_density_grad(model: TrueErrorModel, sigma_b, r, nodes=64):
    """Gradient of ``log int prod_j p(r_j - b) phi_{sigma_b}(b) db`` with respect to ``r``.

    The random-effect integral uses Gauss-Hermite quadrature. ``r`` may be
    (m,) or (k, m); the result has the same shape.
    """
    r = np.asarray(r, dtype=float)
    t, w = np.polynomial.hermite.hermgauss(nodes)
    bq = math.sqrt(2.0) * sigma_b * t
    u = r[..., None, :] - bq[:, None]  # (..., nodes, m)
    logf = model.log_density(u).sum(axis=-1) + np.log(w)
    logf = logf - logf.max(axis=-1, keepdims=True)
    post = np.exp(logf)
    post /= post.sum(axis=-1, keepdims=True)
    return -(post[..., None] * model.score(u)).sum(axis=-2)


def group_information(model: TrueErrorModel, sigma_b, m, rng, n_mc=20000, nodes=64, chunk=4096):
    """Monte Carlo estimate of ``E[grad l grad l']`` for a group of size ``m``,
    accumulated in chunks to bound memory."""
    gen = as_generator(rng)
    out = np.zeros((m, m))
    for start in range(0, n_mc, chunk):
        k = min(chunk, n_mc - start)
        y = model.sample(gen, (k, m)) + sigma_b * gen.standard_normal((k, 1))
        g = group_log_density_grad(model, sigma_b, y, nodes)
        out += g.T @ g
    return out / n_mc


# ---------------------------------------------------------------------------
# centering sequence


def design_matrix(data: PanelDataset):
    """``n^{-1} sum X_i X_i'`` over observations."""
    return data.X.T @ data.X / data.n_obs


def centering_delta(model: TrueErrorModel, data: PanelDataset, beta0, random_intercept_sd=None,
                    rng=None, n_mc=20000, nodes=64, info=None):
    """Return ``(Delta_n, V_n)``.

    Without ``random_intercept_sd`` every observation is an independent unit:
    ``V_n = I * Xbar_n`` and ``Delta_n = n^{-1/2} V_n^{-1} sum score(r_i) X_i``.
    With it, groups are the units, ``V_n = n^{-1} sum X_i' V X_i`` with
    ``V`` the group information, and the per-group score is
    ``-X_i' grad l(Y_i - X_i beta0)``.
    """
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    if beta0.size != data.p:
        raise DimensionError(f"beta0 has {beta0.size} entries, data has p={data.p}")
    r = data.y - data.X @ beta0
    if random_intercept_sd is None:
        n = data.n_obs
        Xn = design_matrix(data)
        if np.linalg.matrix_rank(Xn) < data.p:
            raise SingularDesignError("design matrix is singular", rank=np.linalg.matrix_rank(Xn), p=data.p)
        I = fisher_info(model) if info is None else info
        V = I * Xn
        total = data.X.T @ model.score(r)
    else:
        n = data.n_groups
        Xn = design_matrix(data)
        if np.linalg.matrix_rank(Xn) < data.p:
            raise SingularDesignError("design matrix is singular", rank=np.linalg.matrix_rank(Xn), p=data.p)
        gen = as_generator(rng) if rng is not None else np.random.default_rng(0)
        V = np.zeros((data.p, data.p))
        total = np.zeros(data.p)
        cache = {}
        for (y, X), start in zip(data.groups(), np.concatenate(([0], np.cumsum(data.sizes)[:-1]))):
            m = y.size
            if m not in cache:
                cache[m] = group_information(model, random_intercept_sd, m, gen, n_mc, nodes)
            V += X.T @ cache[m] @ X
            grad = group_log_density_grad(model, random_intercept_sd, y - X @ beta0, nodes)
            total += -X.T @ grad
        V /= n
    delta = np.linalg.solve(V, total) / math.sqrt(n)
    return delta, V


# ---------------------------------------------------------------------------
# posterior vs Gaussian limit


@dataclass
class BvMReport:
    delta: np.ndarray
    V: np.ndarray
    design: np.ndarray | None
    mean_gap: float
    covariance_ratio: np.ndarray
    eigenvalues: np.ndarray
    ks_distances: np.ndarray
    n: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def min_eig(self):
        return float(self.eigenvalues.min())

    @property
    def max_eig(self):
        return float(self.eigenvalues.max())

    @property
    def max_ks(self):
        return float(self.ks_distances.max())

    def csv_row(self, rep):
        return [self.n, rep, self.mean_gap, self.min_eig, self.max_eig, self.max_ks]


BVM_HEADER = ["n", "rep", "mean_gap", "min_eig", "max_eig", "max_ks"]


def _sym_sqrt(V):
    w, Q = np.linalg.eigh(V)
    if np.any(w <= 0):
        raise SingularDesignError("information matrix is not positive definite")
    return (Q * np.sqrt(w)) @ Q.T, w, Q


def gaussianity_report(draws, beta0, delta, V, n, design=None, min_draws=500) -> BvMReport:
    """Compare ``h = sqrt(n)(beta - beta0)`` draws with ``N(delta, V^{-1})``.

    Reports the Mahalanobis gap ``|mean(h) - delta|_V``, eigenvalues of
    ``V^{1/2} Cov(h) V^{1/2}`` and Kolmogorov-Smirnov distances of the
    standardized projections along the eigenvectors of ``V``.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] < min_draws:
        raise DimensionError(f"need at least {min_draws} draws, got {draws.shape[0]}")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    delta = np.asarray(delta, dtype=float).reshape(-1)
    h = math.sqrt(n) * (draws - np.asarray(beta0, dtype=float).reshape(-1))
    cov = np.atleast_2d(np.cov(h, rowvar=False))
    if np.linalg.matrix_rank(cov) < h.shape[1]:
        raise SingularDesignError("posterior draw covariance is rank deficient",
                                  rank=np.linalg.matrix_rank(cov), p=h.shape[1])
    d = h.mean(axis=0) - delta
    gap = float(math.sqrt(d @ V @ d))
    root, w, Q = _sym_sqrt(V)
    ratio = root @ cov @ root
    eig = np.linalg.eigvalsh(ratio)
    proj = (h - delta) @ Q * np.sqrt(w)
    ks = np.array([stats.kstest(proj[:, k], "norm").statistic for k in range(proj.shape[1])])
    return BvMReport(delta, V, design, gap, ratio, eig, ks, n)
