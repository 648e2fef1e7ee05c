"""Frequentist comparators: least squares (F1) and the Gaussian
random-intercept maximum likelihood estimator (F2)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import LOG_SQRT_2PI
from .exceptions import SingularDesignError
from .models import PanelDataset


@dataclass
class FitResult:
    beta: np.ndarray
    sigma2: float
    sigma_b2: float = 0.0
    iterations_used: int = 0
    converged: bool = True
    loglik: float = float("nan")
    message: str = ""
    loglik_trace: list = field(default_factory=list, repr=False)


def _check_rank(X):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise SingularDesignError(f"design has rank {rank} < p = {X.shape[1]}", rank=rank, p=X.shape[1])


def ols_fit(data: PanelDataset) -> FitResult:
    _check_rank(data.X)
    beta, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
    r = data.y - data.X @ beta
    dof = data.n_obs - data.p
    sigma2 = float(r @ r) / dof if dof > 0 else 0.0
    ll = random_intercept_loglik(data, beta, float(r @ r) / data.n_obs, 0.0) if r @ r > 0 else math.inf
    return FitResult(beta, sigma2, 0.0, 0, True, ll)


def random_intercept_loglik(data: PanelDataset, beta, sigma2, sigma_b2) -> float:
    """Gaussian log-likelihood with ``Cov(Y_i) = sigma^2 I + sigma_b^2 J``."""
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    m = data.sizes.astype(float)
    ss = np.bincount(data.group, weights=r * r, minlength=data.n_groups)
    s = np.bincount(data.group, weights=r, minlength=data.n_groups)
    tot = sigma2 + m * sigma_b2
    logdet = (m - 1.0) * math.log(sigma2) + np.log(tot)
    quad = (ss - sigma_b2 * s * s / tot) / sigma2
    return float(-0.5 * np.sum(quad + logdet) - data.n_obs * LOG_SQRT_2PI)


def _gls_beta(data, sigma2, sigma_b2):
    X, y, g, n = data.X, data.y, data.group, data.n_groups
    m = data.sizes.astype(float)
    shrink = sigma_b2 / (sigma2 + m * sigma_b2)
    Sx = np.stack([np.bincount(g, weights=X[:, k], minlength=n) for k in range(data.p)], axis=1)
    Sy = np.bincount(g, weights=y, minlength=n)
    # Omega_i^{-1} = (I - shrink_i J) / sigma^2; the common 1/sigma^2 cancels
    A = X.T @ X - (Sx * shrink[:, None]).T @ Sx
    c = X.T @ y - (Sx * shrink[:, None]).T @ Sy
    return np.linalg.solve(A, c)


def mle_normal_normal(data: PanelDataset, tol: float = 1e-8, max_iter: int = 500,
                      check_monotone: bool = False) -> FitResult:
    """ECME for ``Y_ij = beta' X_ij + b_i + eps_ij`` with normal ``b_i`` and ``eps_ij``.

    Each iteration maximises the observed likelihood over ``beta`` at the
    current variances (generalized least squares), then applies one EM update
    of ``(sigma^2, sigma_b^2)`` from the posterior moments of ``b_i``. Both
    steps are non-decreasing in likelihood. Stops when the largest absolute
    parameter change is below ``tol``.

    EM creeps towards ``sigma_b^2 = 0`` sublinearly, so the boundary point
    (least squares with the ML error variance) is compared at the end and
    returned when its likelihood is higher.
    """
    _check_rank(data.X)
    m = data.sizes.astype(float)
    if np.all(m == 1):
        ols = ols_fit(data)
        return FitResult(ols.beta, ols.sigma2, 0.0, 0, False, ols.loglik,
                         "unidentified: every group has one observation, sigma^2 and sigma_b^2 are confounded")
    N, n = data.n_obs, data.n_groups
    beta, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
    r = data.y - data.X @ beta
    gm = np.bincount(data.group, weights=r, minlength=n) / m
    within = r - gm[data.group]
    sigma2 = max(float(within @ within) / max(N - n, 1), 1e-8)
    sigma_b2 = max(float(np.var(gm)) - sigma2 / m.mean(), 0.1 * sigma2)
    trace = [random_intercept_loglik(data, beta, sigma2, sigma_b2)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_beta = _gls_beta(data, sigma2, sigma_b2)
        r = data.y - data.X @ new_beta
        s = np.bincount(data.group, weights=r, minlength=n)
        tot = sigma2 + m * sigma_b2
        b_mean = sigma_b2 * s / tot
        b_var = sigma2 * sigma_b2 / tot
        resid = r - b_mean[data.group]
        new_sigma2 = (float(resid @ resid) + float(np.sum(m * b_var))) / N
        new_sigma_b2 = float(np.mean(b_mean ** 2 + b_var))
        change = max(np.max(np.abs(new_beta - beta)), abs(new_sigma2 - sigma2), abs(new_sigma_b2 - sigma_b2))
        beta, sigma2, sigma_b2 = new_beta, new_sigma2, new_sigma_b2
        trace.append(random_intercept_loglik(data, beta, sigma2, sigma_b2))
        if check_monotone and trace[-1] < trace[-2] - 1e-10:
            raise AssertionError(f"log-likelihood decreased at iteration {it}: {trace[-2]!r} -> {trace[-1]!r}")
        if change < tol:
            converged = True
            break
    msg = "" if converged else f"no convergence in {max_iter} iterations"
    ols = ols_fit(data)
    if ols.loglik > trace[-1]:
        r = data.y - data.X @ ols.beta
        trace.append(ols.loglik)
        return FitResult(ols.beta, float(r @ r) / N, 0.0, it, True, ols.loglik,
                         "maximum on the boundary sigma_b^2 = 0", trace)
    return FitResult(beta, sigma2, sigma_b2, it, converged, trace[-1], msg, trace)
