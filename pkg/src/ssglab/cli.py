"""Command-line entry point.

Subcommands mirror the experiment taxonomy: ``constants`` and ``oracle``
print deterministic quantities, ``simulate`` emits exact path samples,
``variations`` / ``ito`` / ``converge`` run replicated experiments with a
manifest, and ``audit`` runs the shape-function and envelope checks.

Exit codes: 0 success / all checks passed, 2 a statistical or audit check
failed, 1 usage or configuration error.  The environment variable
``SSGLAB_SEED`` overrides any configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from . import quadrature as quad
from . import statistics as st
from .covariance_engine import (GridSpec, build_increment_covariance,
                                cholesky_factor, inequality_audit, rng_stream,
                                sample_path_values)
from .hermite import odd_power_coeffs
from .process_models import hypothesis_audit, parse_model_spec

_CONFIG_KEYS = {
    "model": str, "measure": str, "function": str, "ell": int, "n": str,
    "T": float, "t_list": str, "replications": int, "seed": int,
    "workers": int, "deterministic": lambda v: v.lower() in ("1", "true", "yes"),
    "retries": int, "p_threshold": float, "var_rtol": float, "p_blocks": int,
    "z_draws": int, "kind": str,
}


def _read_config_file(path: str) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _CONFIG_KEYS:
            raise ValueError(f"config file: unknown entry {line!r}")
        if value.strip() != "":
            out[key] = _CONFIG_KEYS[key](value.strip())
    return out


def _int_list(text) -> tuple:
    return tuple(int(v) for v in str(text).split(","))


def _float_list(text) -> tuple:
    return tuple(float(v) for v in str(text).split(","))


def _experiment_config(args, kind: str) -> mc.ExperimentConfig:
    file_cfg = _read_config_file(args.config) if args.config else {}
    if file_cfg.get("kind", kind) != kind:
        raise ValueError(f"config file is for kind={file_cfg['kind']}, "
                         f"running {kind}")

    def pick(name, default=None):
        cli = getattr(args, name, None)
        if cli is not None:
            return cli
        return file_cfg.get(name, default)

    n_raw = pick("n", 256)
    n = _int_list(n_raw) if kind == "converge" else int(str(n_raw).split(",")[0])
    t_raw = pick("t_list", (1.0,))
    t_list = _float_list(t_raw) if isinstance(t_raw, str) else tuple(t_raw)
    seed = int(os.environ.get("SSGLAB_SEED", pick("seed", 20260809)))
    cfg = mc.ExperimentConfig(
        model=pick("model"), measure=pick("measure"),
        function=pick("function", "sin"), ell=pick("ell"), n=n,
        T=pick("T"), t_list=t_list,
        replications=int(pick("replications", 1000)), seed=seed,
        workers=int(pick("workers", 1)),
        deterministic=bool(pick("deterministic", True)),
        retries=int(pick("retries", 3)),
        p_threshold=float(pick("p_threshold", 0.01)),
        var_rtol=float(pick("var_rtol", 0.15)),
        p_blocks=int(pick("p_blocks", 256)),
        z_draws=pick("z_draws"),
    )
    if cfg.model is None:
        raise ValueError("a model spec is required (--model or config file)")
    return cfg


def _print_decisions(report) -> None:
    for name, d in sorted(report.decisions.items()):
        flag = {True: "pass", False: "FAIL", None: "skip"}[d.get("pass")]
        print(f"[{flag}] {name}")


def _cmd_constants(args) -> int:
    out: dict = {}
    what = args.what
    if what in (None, "measure") and args.measure:
        measure = quad.parse_measure_spec(args.measure)
        ell = quad.ell_of(measure)
        kap = quad.kappa(measure, ell)
        out.update({"measure": measure.spec(), "ell": ell, "kappa": float(kap)})
        if isinstance(kap, Fraction):
            out["kappa_rational"] = str(kap)
        out["kappa_by_order"] = {
            str(h): float(quad.kappa(measure, h)) for h in range(ell, 2 * ell + 1)}
        if not measure.boundary_supported:
            out["warning"] = ("interior-only measure: outside the class the "
                              "limit theory is verified for")
    if what in (None, "sigma") and args.model and args.ell is not None:
        model = parse_model_spec(args.model)
        lc = st.sigma_ell_series(model, args.ell, rel_tol=args.rel_tol)
        out.update({"model": model.spec, "sigma_ell": args.ell,
                    "sigma2": lc.sigma2, "truncation_P": lc.truncation_P,
                    "tail_bound": lc.tail_bound, "regime_warning": lc.warning})
    if what in (None, "hermite") and args.r is not None:
        out["hermite_row"] = {"r": args.r,
                              "coeffs": list(odd_power_coeffs(args.r).coeffs)}
    if not out:
        raise ValueError("constants: nothing requested; pass --measure, "
                         "--model with --ell, or --r")
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_simulate(args) -> int:
    model = parse_model_spec(args.model)
    grid = GridSpec(args.n, args.T)
    factor = cholesky_factor(build_increment_covariance(model, grid))
    streams = [rng_stream(args.seed, 0, 0, i) for i in range(args.paths)]
    X = sample_path_values(factor, streams, args.paths)
    lines = [f"# schema=ssglab-paths-{mc.SCHEMA_VERSION}",
             f"# model={model.spec} n={grid.n} T={grid.T!r} seed={args.seed}",
             "path,j,t,value"]
    for p in range(args.paths):
        lines += [f"{p},{j},{j / grid.n!r},{float(X[p, j])!r}"
                  for j in range(grid.N + 1)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(args, kind: str) -> int:
    cfg = _experiment_config(args, kind)
    runner = {"variations": mc.run_variation_experiment,
              "ito": mc.run_ito_experiment,
              "converge": mc.run_convergence_experiment}[kind]
    report = runner(cfg)
    out_dir = args.out or f"ssglab-{kind}-{report.config_hash}"
    paths = mc.write_report(report, out_dir)
    print(f"config_hash={report.config_hash} seed={report.seed}")
    _print_decisions(report)
    print(f"report: {paths['report']}")
    return 0 if report.all_passed else 2


def _cmd_audit(args) -> int:
    model = parse_model_spec(args.model)
    hyp = hypothesis_audit(model, fd_step=args.fd_step)
    ineq = inequality_audit(model, _int_list(args.n_list), T=args.T)
    body = {
        "model": model.spec,
        "hypothesis": {name: {"base": b, "refined": r}
                       for name, (b, r) in hyp.checks.items()},
        "hypothesis_passed": hyp.passed,
        "inequalities": {name: list(vals) for name, vals in ineq.values.items()},
        "inequalities_passed": ineq.passed,
        "n_list": list(ineq.n_list),
    }
    print(json.dumps(body, sort_keys=True, indent=2))
    return 0 if hyp.passed and ineq.all_passed else 2


def _cmd_oracle(args) -> int:
    model = parse_model_spec(args.model)
    lc = st.sigma_ell_series(model, args.ell)
    lines = [f"# schema=ssglab-oracle-{mc.SCHEMA_VERSION}",
             f"# model={model.spec} ell={args.ell} t={args.t!r} "
             f"sigma2_limit={lc.sigma2!r}",
             "n,exact_variance,limit_variance,relative_gap"]
    expo = 2 * model.beta / model.alpha
    limit = lc.sigma2 * args.t ** expo
    for n in _int_list(args.n):
        exact = st.exact_variance_Vn(model, args.ell, n, args.t,
                                     workers=args.workers)
        lines.append(f"{n},{exact!r},{limit!r},{abs(exact - limit) / limit!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ssglab",
        description="numerical laboratory for weighted Riemann sums and odd "
                    "power variations of self-similar Gaussian processes")
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("constants", help="quadrature/series/expansion constants")
    c.add_argument("what", nargs="?", choices=["measure", "sigma", "hermite"])
    c.add_argument("--measure")
    c.add_argument("--model")
    c.add_argument("--ell", type=int)
    c.add_argument("--r", type=int)
    c.add_argument("--rel-tol", type=float, default=1e-12, dest="rel_tol")

    s = sub.add_parser("simulate", help="emit exact path samples as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=20260809)
    s.add_argument("--out")

    for kind, help_text in [
            ("variations", "power-variation distribution experiment"),
            ("ito", "change-of-variables residual experiment"),
            ("converge", "residual decay over an n-ladder")]:
        e = sub.add_parser(kind, help=help_text)
        e.add_argument("--config", help="flat key=value config file")
        e.add_argument("--model")
        e.add_argument("--measure")
        e.add_argument("--function", dest="function")
        e.add_argument("--ell", type=int)
        e.add_argument("--n", help="mesh size; comma ladder for converge")
        e.add_argument("--T", type=float)
        e.add_argument("--t", dest="t_list", help="comma list of time points")
        e.add_argument("--reps", type=int, dest="replications")
        e.add_argument("--seed", type=int)
        e.add_argument("--workers", type=int)
        e.add_argument("--retries", type=int)
        e.add_argument("--p-blocks", type=int, dest="p_blocks")
        e.add_argument("--z-draws", type=int, dest="z_draws")
        e.add_argument("--var-rtol", type=float, dest="var_rtol")
        e.add_argument("--deterministic", action="store_true", default=None)
        e.add_argument("--no-deterministic", dest="deterministic",
                       action="store_false")
        e.add_argument("--out")

    a = sub.add_parser("audit", help="shape-function and envelope audits")
    a.add_argument("--model", required=True)
    a.add_argument("--n-list", default="64,256,1024", dest="n_list")
    a.add_argument("--T", type=float, default=1.0)
    a.add_argument("--fd-step", type=float, default=1e-6, dest="fd_step")

    o = sub.add_parser("oracle", help="exact variance table over an n-ladder")
    o.add_argument("--model", required=True)
    o.add_argument("--ell", type=int, required=True)
    o.add_argument("--n", required=True, help="comma list of mesh sizes")
    o.add_argument("--t", type=float, default=1.0)
    o.add_argument("--workers", type=int, default=1)
    o.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "constants":
            return _cmd_constants(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command in ("variations", "ito", "converge"):
            return _cmd_experiment(args, args.command)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"ssglab: error: {exc}", file=sys.stderr)
        return 1
    return 1  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
