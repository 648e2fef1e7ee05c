"""Command-line entry point: ``sdpmix {simulate,fit,bvm,sdp-demo}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness, sdp
from .exceptions import ConfigurationError, SdpmixError
from .sampler import ChainConfig, PriorConfig

log = logging.getLogger("sdpmix")

_PRIOR_KEYS = {"tau0_sq", "alpha0", "lambda0", "alpha1", "lambda1", "dp_concentration", "tau1"}
_CHAIN_KEYS = {"iterations", "burn_in", "thin"}
_SIM_KEYS = {"beta0", "random_effect_sd"}


def load_config(path):
    """JSON file with optional sections ``priors``, ``chain`` and ``simulation``."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    allowed = {"priors": _PRIOR_KEYS, "chain": _CHAIN_KEYS, "simulation": _SIM_KEYS}
    for section, body in cfg.items():
        if section not in allowed:
            raise ConfigurationError(f"unknown config section {section!r}")
        extra = set(body) - allowed[section]
        if extra:
            raise ConfigurationError(f"unknown keys in {section}: {sorted(extra)}")
    return cfg


def _priors(cfg):
    return PriorConfig.from_dict(cfg.get("priors", {}))


def _chain(args, cfg, default=(6000, 1000, 1)):
    c = dict(zip(("iterations", "burn_in", "thin"), default))
    c.update(cfg.get("chain", {}))
    for key, flag in (("iterations", args.iters), ("burn_in", args.burnin), ("thin", args.thin)):
        if flag is not None:
            c[key] = flag
    return ChainConfig(int(c["iterations"]), int(c["burn_in"]), int(c["thin"]), args.seed)


def _mode(args):
    return sdp.AUXILIARY if args.aux_new_cluster else sdp.INTEGRATED


def run_simulate(args, cfg):
    sim = cfg.get("simulation", {})
    exp = harness.ExperimentConfig(
        error=args.error[0], reps=args.reps, n_groups=args.groups, group_size=args.group_size,
        methods=tuple(args.methods.split(",")), seed=args.seed, chain=_chain(args, cfg), priors=_priors(cfg),
        beta0=tuple(sim.get("beta0", (-1.0, 1.0))), random_effect_sd=float(sim.get("random_effect_sd", 0.85)),
        new_cluster_mode=_mode(args))
    table = harness.cmd_simulate(exp, args.out, args.workers, errors=args.error)
    print(table.format())
    if args.out:
        print(f"wrote {args.out} and {harness.aggregate_path(args.out)}")


def run_fit(args, cfg):
    rows, summary = harness.cmd_fit(args.model, args.data, _chain(args, cfg), _priors(cfg), args.out, _mode(args))
    print(f"{'parameter':<10}" + "".join(f"{k:>10}" for k in harness.FIT_HEADER[1:]))
    for r in rows:
        print(f"{r['parameter']:<10}" + "".join(f"{r[k]:>10.4f}" for k in harness.FIT_HEADER[1:]))
    if args.out:
        print(f"wrote {args.out}")


def run_bvm(args, cfg):
    bcfg = harness.BvmConfig(kind=args.kind, error=args.error[0], n=args.n, reps=args.reps, seed=args.seed,
                             chain=_chain(args, cfg), priors=_priors(cfg), group_size=args.group_size,
                             new_cluster_mode=_mode(args))
    reports = harness.cmd_bvm(bcfg, args.out, args.workers)
    print(",".join(harness.BVM_HEADER))
    for k, r in enumerate(reports):
        print(f"{r.n},{k},{r.mean_gap:.4f},{r.min_eig:.4f},{r.max_eig:.4f},{r.max_ks:.4f}")


def run_sdp_demo(args, cfg):
    rows, stick = harness.cmd_sdp_demo(args.alpha, args.tau1, args.n, args.seed, args.past, args.out,
                                       args.stick_out)
    print(",".join(harness.SDP_HEADER))
    for kind, loc, w in rows:
        print(f"{kind},{'' if kind == 'base' else repr(loc)},{w!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--config", help="JSON file with priors/chain/simulation overrides")
    common.add_argument("-v", "--verbose", action="store_true")

    chain = argparse.ArgumentParser(add_help=False)
    chain.add_argument("--iters", type=int, help="total Gibbs iterations")
    chain.add_argument("--burnin", type=int, help="iterations discarded before retention")
    chain.add_argument("--thin", type=int, help="keep every k-th iteration after burn-in")
    chain.add_argument("--aux-new-cluster", action="store_true",
                       help="open new classes with an auxiliary draw instead of the integrated weight")
    chain.add_argument("--workers", type=int, default=1, help="worker processes for replications")

    parser = argparse.ArgumentParser(prog="sdpmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, chain], help="efficiency study on simulated panels")
    p.add_argument("--error", type=lambda s: s.split(";") if s.lstrip().startswith("{") else s.split(","),
                   default=["E6"], help="error law token(s) E1..E9, comma separated, or a JSON spec")
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--groups", type=int, default=20)
    p.add_argument("--group-size", type=int, default=5)
    p.add_argument("--methods", default=",".join(harness.METHODS))
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("fit", parents=[common, chain], help="fit a growth-curve submodel M1..M5")
    p.add_argument("--model", default="M5", choices=[f"M{k}" for k in range(1, 6)])
    p.add_argument("--data", help="growth CSV (subject,sex,age,distance); bundled data by default")
    p.set_defaults(func=run_fit)

    p = sub.add_parser("bvm", parents=[common, chain], help="posterior vs Gaussian limit study")
    p.add_argument("--kind", default="location", choices=harness.BVM_KINDS)
    p.add_argument("--error", type=lambda s: [s], default=["E8"], help="symmetric mixture error law")
    p.add_argument("--n", type=int, default=500, help="sample size (groups for random-intercept)")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--group-size", type=int, default=5)
    p.set_defaults(func=run_bvm)

    p = sub.add_parser("sdp-demo", parents=[common], help="Polya-urn predictive and stick-breaking draw")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--tau1", type=float, default=3.0)
    p.add_argument("--n", type=int, default=0, help="sequential predictive draws")
    p.add_argument("--past", type=float, nargs="*", default=[], help="values already observed")
    p.add_argument("--stick-out", help="CSV path for the stick-breaking draw")
    p.set_defaults(func=run_sdp_demo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, load_config(args.config))
    except SdpmixError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
