"""Joint-distribution test of the Gibbs sampler.

The marginal-conditional simulator draws parameters from the prior and data
given parameters. The successive-conditional simulator alternates one Gibbs
cycle with a fresh data draw. Both target the same joint law, so moments of
the parameters must agree; a disagreement points at a wrong conditional.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sdp
from .distributions import as_generator
from .sampler import ChainState, GibbsSampler, PriorConfig


def prior_state(gen, sampler: GibbsSampler) -> ChainState:
    data, pr, spec = sampler.data, sampler.priors, sampler.spec
    beta = gen.normal(0.0, math.sqrt(pr.tau0_sq), data.p)
    sigma2 = pr.lambda0 / gen.standard_gamma(pr.alpha0)
    q = spec.n_random
    sigma_b2 = pr.lambda1 / gen.standard_gamma(pr.alpha1, q)
    b = gen.standard_normal((data.n_groups, q)) * np.sqrt(sigma_b2)
    assign = sdp.sample_prior_assignment(gen, data.n_obs, pr.sdp) if spec.sdp_errors else None
    return ChainState(beta, float(sigma2), b, sigma_b2, assign)


def simulate_response(gen, sampler: GibbsSampler, state: ChainState):
    data = sampler.data
    mean = data.X @ state.beta + sampler.design.random_part(state.b) + state.z(data.n_obs)
    return mean + math.sqrt(state.sigma2) * gen.standard_normal(data.n_obs)


def monitored_functions(state: ChainState):
    return np.concatenate((state.beta, state.beta ** 2, [state.sigma2], state.sigma_b2))


def function_names(p, q):
    names = [f"beta_{k + 1}" for k in range(p)] + [f"beta_{k + 1}^2" for k in range(p)] + ["sigma2"]
    return names + (["sigma_b2"] if q == 1 else [f"sigma_b{k + 1}_sq" for k in range(q)])


def marginal_conditional(gen, sampler, n_samples):
    return np.array([monitored_functions(prior_state(gen, sampler)) for _ in range(n_samples)])


def successive_conditional(gen, sampler: GibbsSampler, n_samples, thin=1):
    state = prior_state(gen, sampler)
    sampler.data = sampler.data.with_response(simulate_response(gen, sampler, state))
    out = np.empty((n_samples, len(monitored_functions(state))))
    for k in range(n_samples):
        for _ in range(thin):
            sampler.cycle(gen, state)
            sampler.data = sampler.data.with_response(simulate_response(gen, sampler, state))
        out[k] = monitored_functions(state)
    return out


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of an autocorrelated series by batch means."""
    x = np.asarray(x, dtype=float)
    size = x.shape[0] // n_batches
    means = x[: size * n_batches].reshape(n_batches, size, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


@dataclass
class GewekeResult:
    names: list
    z: np.ndarray
    mc_mean: np.ndarray
    sc_mean: np.ndarray

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z)))


def geweke_test(design_data, priors: PriorConfig, variant="B3", n_samples=10_000, rng=None,
                thin=1, n_batches=50, **sampler_kw) -> GewekeResult:
    """Compare prior moments with the successive-conditional chain on the
    design (covariates and grouping) of ``design_data``."""
    gen = as_generator(rng) if rng is not None else np.random.default_rng(0)
    sampler = GibbsSampler(design_data, priors, variant, **sampler_kw)
    mc = marginal_conditional(gen, sampler, n_samples)
    sc = successive_conditional(gen, sampler, n_samples, thin)
    se = np.sqrt(mc.var(axis=0, ddof=1) / n_samples + batch_means_se(sc, n_batches) ** 2)
    z = (mc.mean(axis=0) - sc.mean(axis=0)) / se
    return GewekeResult(function_names(design_data.p, sampler.spec.n_random), z, mc.mean(axis=0), sc.mean(axis=0))
