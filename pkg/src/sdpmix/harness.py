"""Experiment drivers: the efficiency study, growth-data fits, the Gaussian
limit study and the Polya-urn demo. Every driver is deterministic given its
configuration and seed; replication ``k`` always uses random stream ``k``,
so results do not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sdp
from .baselines import mle_normal_normal, ols_fit
from .bvm import BVM_HEADER, TrueErrorModel, centering_delta, fisher_info, gaussianity_report
from .distributions import ErrorSpec, RngStream, error_sample, parse_error_spec
from .exceptions import ConfigurationError, ParameterError
from .models import GenerativeConfig, GrowthModel, PanelDataset, load_growth_data, simulate_dataset
from .sampler import ChainConfig, ModelSpec, PriorConfig, run_chain

log = logging.getLogger(__name__)

METHODS = ("F1", "F2", "B1", "B2", "B3")
SIM_HEADER = ["experiment", "method", "rep", "sqerr"]
AGG_HEADER = ["experiment", "method", "mse", "rel_eff"]
FIT_HEADER = ["parameter", "mean", "sd", "median", "q025", "q975"]


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


@dataclass
class ExperimentConfig:
    error: ErrorSpec | str = "E6"
    reps: int = 300
    n_groups: int = 20
    group_size: int = 5
    methods: tuple = METHODS
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    beta0: tuple = (-1.0, 1.0)
    random_effect_sd: float = 0.85
    new_cluster_mode: str = sdp.INTEGRATED

    def __post_init__(self):
        self.error = parse_error_spec(self.error)
        self.methods = tuple(m.strip().upper() for m in self.methods)
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
        if self.reps < 0:
            raise ParameterError("reps must be non-negative")

    def generative(self):
        return GenerativeConfig(self.beta0, self.error, self.random_effect_sd, self.n_groups, self.group_size)


def estimate(method, data: PanelDataset, cfg: ExperimentConfig, rng: RngStream):
    if method == "F1":
        return ols_fit(data).beta
    if method == "F2":
        return mle_normal_normal(data).beta
    chain = ChainConfig(cfg.chain.iterations, cfg.chain.burn_in, cfg.chain.thin, cfg.seed, rng.stream_id)
    summary = run_chain(data, cfg.priors, chain, method, new_cluster_mode=cfg.new_cluster_mode, rng=rng)
    return summary.mean[: data.p]


def run_replication(cfg: ExperimentConfig, rep: int):
    """Simulate one dataset and return ``(method, rep, sqerr or None, error message)`` records."""
    stream = RngStream(cfg.seed, rep)
    data = simulate_dataset(stream.child(0), cfg.generative())
    beta0 = np.asarray(cfg.beta0, dtype=float)
    out = []
    for method in cfg.methods:
        # method streams are keyed by name so adding a method never shifts another
        try:
            est = estimate(method, data, cfg, stream.child(1 + METHODS.index(method)))
            out.append((method, rep, float(np.sum((est - beta0) ** 2)), ""))
        except Exception as exc:  # recorded and counted, never dropped silently
            out.append((method, rep, None, f"{type(exc).__name__}: {exc}"))
    return out


def _run_reps(fn, args, reps, workers):
    if workers <= 1 or reps <= 1:
        return [fn(*args, r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, *args, r) for r in range(reps)]
        return [f.result() for f in futs]


@dataclass
class ResultTable:
    records: list  # (experiment, method, rep, sqerr or None, message)
    methods: tuple

    def experiments(self):
        return list(dict.fromkeys(r[0] for r in self.records))

    def counts(self, experiment, method):
        rs = [r for r in self.records if r[0] == experiment and r[1] == method]
        ok = sum(r[3] is not None for r in rs)
        return ok, len(rs) - ok

    def mse(self, experiment, method):
        errs = sorted((r[2], r[3]) for r in self.records
                      if r[0] == experiment and r[1] == method and r[3] is not None)
        return math.fsum(e for _, e in errs) / len(errs) if errs else math.nan

    def rel_eff(self, experiment, method):
        if "B3" not in self.methods:
            return math.nan
        return self.mse(experiment, method) / self.mse(experiment, "B3")

    def aggregate(self):
        return [(e, m, self.mse(e, m), self.rel_eff(e, m)) for e in self.experiments() for m in self.methods]

    def write(self, path):
        """Per-replication CSV at ``path`` and the aggregate beside it as ``<stem>_aggregate.csv``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SIM_HEADER)
            for e, m, rep, err, _ in sorted(self.records, key=lambda r: (r[0], r[2], METHODS.index(r[1]))):
                w.writerow([e, m, rep, _fmt(err)])
        agg = aggregate_path(path)
        with open(agg, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(AGG_HEADER)
            for e, m, mse, rel in self.aggregate():
                w.writerow([e, m, _fmt(mse), _fmt(rel)])
        return path, agg

    def format(self):
        lines = [f"{'experiment':<12}{'method':<8}{'mse':>12}{'rel_eff':>10}{'ok':>6}{'failed':>8}"]
        for e, m, mse, rel in self.aggregate():
            ok, bad = self.counts(e, m)
            lines.append(f"{e:<12}{m:<8}{mse:>12.5f}{rel:>10.3f}{ok:>6}{bad:>8}")
        return "\n".join(lines)


def aggregate_path(path):
    path = Path(path)
    return path.with_name(path.stem + "_aggregate" + (path.suffix or ".csv"))


def cmd_simulate(cfg: ExperimentConfig, out=None, workers=1, errors=None) -> ResultTable:
    """Run the efficiency study for ``cfg.error`` (or each spec in ``errors``)."""
    specs = [cfg.error] if errors is None else [parse_error_spec(e) for e in errors]
    records = []
    for spec in specs:
        sub = ExperimentConfig(spec, cfg.reps, cfg.n_groups, cfg.group_size, cfg.methods, cfg.seed,
                               cfg.chain, cfg.priors, cfg.beta0, cfg.random_effect_sd, cfg.new_cluster_mode)
        for rows in _run_reps(run_replication, (sub,), cfg.reps, workers):
            for method, rep, err, msg in rows:
                if msg:
                    log.warning("%s %s rep %d failed: %s", spec.label, method, rep, msg)
                records.append((spec.label, method, rep, err, msg))
    table = ResultTable(records, cfg.methods)
    if out is not None:
        table.write(out)
    return table


# ---------------------------------------------------------------------------
# growth data


def growth_variant(model: GrowthModel) -> ModelSpec:
    return ModelSpec(sdp_errors=model.sdp_errors, n_random=model.n_random)


def growth_parameters(model: GrowthModel):
    """Parameters reported per growth submodel, in table order."""
    names = ["beta_0", "beta_1", "beta_2", "beta_3", "sigma"]
    return names + ["sigma_b1", "sigma_b2"][: model.n_random]


def cmd_fit(model, data_path=None, chain: ChainConfig | None = None, priors: PriorConfig | None = None,
            out=None, new_cluster_mode=sdp.INTEGRATED):
    """Fit a growth submodel and return ``(rows, summary)``; rows follow
    ``parameter,mean,sd,median,q025,q975``."""
    model = GrowthModel[str(model).upper()] if not isinstance(model, GrowthModel) else model
    data = load_growth_data(data_path)
    summary = run_chain(data, priors, chain, growth_variant(model), new_cluster_mode=new_cluster_mode)
    alias = {"sigma_b1": "sigma_b"} if model.n_random == 1 else {}
    rows = []
    for name in growth_parameters(model):
        row = summary.row(alias.get(name, name))
        row["parameter"] = name
        rows.append(row)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FIT_HEADER)
            for r in rows:
                w.writerow([r["parameter"]] + [_fmt(r[k]) for k in FIT_HEADER[1:]])
    return rows, summary


# ---------------------------------------------------------------------------
# Gaussian-limit study

BVM_KINDS = ("location", "regression", "random-intercept")


@dataclass
class BvmConfig:
    kind: str = "location"
    error: ErrorSpec | str = "E8"
    n: int = 500
    reps: int = 20
    seed: int = 0
    chain: ChainConfig = field(default_factory=lambda: ChainConfig(6000, 1000, 1))
    priors: PriorConfig = field(default_factory=PriorConfig)
    group_size: int = 5
    random_effect_sd: float = 0.85
    new_cluster_mode: str = sdp.INTEGRATED

    def __post_init__(self):
        self.error = parse_error_spec(self.error)
        if self.kind not in BVM_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; choose from {', '.join(BVM_KINDS)}")
        if not self.error.is_mixture:
            raise ConfigurationError(
                f"error law {self.error.label} is not a symmetric normal location mixture: the true error "
                "density must lie in the model class for the Gaussian limit to apply "
                "(heavy-tailed laws such as the Cauchy E1 are outside it)")

    @property
    def beta0(self):
        return np.array([0.0]) if self.kind == "location" else np.array([-1.0, 1.0])


def bvm_replication(cfg: BvmConfig, rep: int, info=None):
    stream = RngStream(cfg.seed, rep)
    gen = stream.child(0).gen
    if cfg.kind == "location":
        y = cfg.beta0[0] + error_sample(gen, cfg.error, cfg.n)
        data = PanelDataset([(y, np.ones((cfg.n, 1)))], names=["theta"])
        spec = ModelSpec(sdp_errors=True, n_random=0)
    elif cfg.kind == "regression":
        X = (gen.random((cfg.n, 2)) < 0.5).astype(float)
        X[:, 0] = 1.0
        y = X @ cfg.beta0 + error_sample(gen, cfg.error, cfg.n)
        data = PanelDataset([(y, X)])
        spec = ModelSpec(sdp_errors=True, n_random=0)
    else:
        gcfg = GenerativeConfig(cfg.beta0, cfg.error, cfg.random_effect_sd, cfg.n, cfg.group_size)
        data = simulate_dataset(gen, gcfg)
        spec = ModelSpec(sdp_errors=True, n_random=1)
    truth = TrueErrorModel.from_error_spec(cfg.error)
    chain = ChainConfig(cfg.chain.iterations, cfg.chain.burn_in, cfg.chain.thin, cfg.seed, rep)
    summary = run_chain(data, cfg.priors, chain, spec, new_cluster_mode=cfg.new_cluster_mode, rng=stream.child(1))
    draws = summary.draws[:, : data.p]
    if cfg.kind == "random-intercept":
        delta, V = centering_delta(truth, data, cfg.beta0, cfg.random_effect_sd, rng=stream.child(2))
        n = data.n_groups
    else:
        delta, V = centering_delta(truth, data, cfg.beta0, info=info)
        n = data.n_obs
    return gaussianity_report(draws, cfg.beta0, delta, V, n)


def cmd_bvm(cfg: BvmConfig, out=None, workers=1):
    info = fisher_info(TrueErrorModel.from_error_spec(cfg.error))
    reports = _run_reps(bvm_replication, (cfg, ), cfg.reps, workers) if cfg.kind == "random-intercept" else \
        _run_reps(_bvm_with_info, (cfg, info), cfg.reps, workers)
    rows = [r.csv_row(k) for k, r in enumerate(reports)]
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BVM_HEADER)
            for row in rows:
                w.writerow(row[:2] + [repr(float(v)) for v in row[2:]])
    return reports


def _bvm_with_info(cfg, info, rep):
    return bvm_replication(cfg, rep, info)


# ---------------------------------------------------------------------------
# Polya-urn demo

SDP_HEADER = ["kind", "location", "weight"]


def cmd_sdp_demo(alpha, tau1, n=0, seed=0, past=(), out=None, stick_out=None, truncation=None):
    """Draw ``n`` values sequentially from the predictive law (after any
    ``past`` values) and return the predictive rows ``(kind, location, weight)``
    plus one stick-breaking draw from the resulting posterior."""
    prior = sdp.SdpPrior(float(alpha), float(tau1))
    stream = RngStream(seed, 0)
    values = [float(v) for v in past]
    for _ in range(n):
        law = sdp.predictive_weights(prior, values)
        values.append(float(sdp.sample_predictive(stream.gen, law, 1)[0]))
    law = sdp.predictive_weights(prior, values)
    rows = [("base", math.nan, law.base_mass)] + [("atom", z, m) for z, m in law.atoms]
    stick = sdp.stick_breaking_sample(stream.child(1), sdp.sdp_posterior(prior, values), truncation)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SDP_HEADER)
            for kind, loc, wt in rows:
                w.writerow([kind, _fmt(loc), repr(float(wt))])
    if stick_out is not None:
        with open(stick_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "location", "weight"])
            for k, (z, wt) in enumerate(zip(stick.locations, stick.weights)):
                w.writerow([k, repr(float(z)), repr(float(wt))])
            w.writerow(["remainder", "", repr(float(stick.remainder_mass))])
    return rows, stick
