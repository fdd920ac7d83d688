"""Command-line front end.

Exit codes: 0 success, 1 validation/configuration error, 2 failed checks.
Outputs go to ``--out`` or ``$LORENTZGAS_OUT`` (default ``./runs``).
"""
import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cf

OUT_ENV = "LORENTZGAS_OUT"


class UsageError(Exception):
    pass


def _out_dir(args):
    d = Path(args.out or os.environ.get(OUT_ENV, "runs"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _ints(text):
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _record(args, doc=None, seed=None, outputs=()):
    """Remember what the manifest of this run should hold."""
    args.manifest = (doc, seed, list(outputs))


def _write_manifest(args):
    doc, seed, outputs = getattr(args, "manifest", (None, None, []))
    if doc is None:
        doc = {k: v for k, v in vars(args).items() if k not in ("manifest", "func")}
    if seed is None:
        seed = args.seed
    path = _out_dir(args) / "manifest.json"
    path.write_text(json.dumps(cf.manifest(doc, seed, outputs), indent=1, sort_keys=True, default=str))
    return path


def _load_experiment(args):
    if not args.config:
        raise UsageError("--config is required")
    doc = cf.load_toml(args.config)
    ex = doc.setdefault("experiment", {})
    if args.n is not None:
        ex["n_max"] = args.n
        if args.checkpoints is None:
            ex["checkpoints"] = [c for c in ex.get("checkpoints", []) if c <= args.n] or [args.n]
    if args.trajectories is not None:
        ex["trajectories"] = args.trajectories
    if args.checkpoints is not None:
        ex["checkpoints"] = _ints(args.checkpoints)
    if args.seed is not None:
        ex["seed"] = args.seed
    norm = doc.setdefault("normalization", {})
    if args.alpha is not None:
        norm["alpha"] = args.alpha
    if args.d is not None:
        norm["d"] = args.d
    return cf.experiment_from_dict(doc)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    from .geometry import classify_horizon, validate_table

    if not args.config:
        raise UsageError("--config is required")
    table = cf.table_from_dict(cf.load_toml(args.config))
    rep = validate_table(table)
    if not rep.ok:
        print(f"invalid table: {rep}")
        return 1
    print(classify_horizon(table, table.direction_search_height))
    return 0


def cmd_classify(args):
    from .geometry import classify_horizon

    if not args.config:
        raise UsageError("--config is required")
    table = cf.table_from_dict(cf.load_toml(args.config))
    rep = classify_horizon(table, args.height or table.direction_search_height)
    print(rep)
    for c in rep.corridors:
        print(f"  corridor ({c.lattice_direction[0]},{c.lattice_direction[1]}) width {c.width:.6g}")
    return 0


def cmd_simulate_map(args):
    from .stats import run_experiment, write_samples

    cfg = _load_experiment(args)
    if cfg.system == "billiard":
        from .geometry import validate_table

        rep = validate_table(cfg.table)
        if not rep.ok:
            print(f"invalid table: {rep}")
            return 1
    report, samples = run_experiment(cfg)
    out = _out_dir(args)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    files = ["report.json", "report.csv"]
    if samples is not None and len(samples):
        write_samples(samples, cfg, out / "samples.csv")
        files.append("samples.csv")
    _record(args, cfg.to_dict(), cfg.seed, files)
    _print_rows(report.rows)
    if report.error:
        print(f"error: {report.error}")
        return 1
    return 0


def cmd_simulate_flow(args):
    from .stats import flow_experiment

    cfg = _load_experiment(args)
    if cfg.system != "billiard" or cfg.t_max <= 0 or len(cfg.specs) != 2:
        raise UsageError("flow runs need a billiard table, [flow] t_max and two observables [local time, null-sum]")
    fr = flow_experiment(cfg)
    out = _out_dir(args)
    doc = {"times": fr.times.tolist(), "rate": fr.rate.tolist(), "rate_se": fr.rate_se.tolist(),
           "mean_tau": fr.mean_tau, "time_change_ratio": fr.time_change_ratio, "null_mean": fr.null_mean,
           "null_se": fr.null_se, "local_time_mean": fr.local_time_mean, "truncated": fr.truncated,
           "rate_stable": fr.rate_stable}
    (out / "flow.json").write_text(json.dumps(doc, indent=1))
    _record(args, cfg.to_dict(), cfg.seed, ["flow.json"])
    print(f"collision rate n_t/t at T: {fr.rate[-1]:.6g} (1/E[tau] = {1 / fr.mean_tau:.6g})")
    print(f"time-change ratio: {fr.time_change_ratio:.4f}")
    print(f"null-sum mean: {fr.null_mean:.4g} +- {fr.null_se:.2g}")
    return 0


def _step_from_args(args):
    from .rw_oracle import named_step, stable_step_builder

    if args.step == "stable":
        return stable_step_builder(args.alpha or 1.5, args.cutoff)
    try:
        return named_step(args.step)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_oracle_occupation(args):
    from .rw_oracle import convolve

    step = _step_from_args(args)
    if args.n is None:
        raise UsageError("--n is required")
    a = tuple(_ints(args.a)) if args.a is not None else None
    if a is not None and len(a) != step.dim:
        raise UsageError(f"--a needs {step.dim} coordinate(s)")
    occ = convolve(step, args.n, keep=[args.n])
    occ.to_csv(_out_dir(args) / "occupation.csv")
    _record(args, outputs=["occupation.csv"])
    if a is not None:
        print(repr(occ.prob(args.n, a)))
    return 0


def _parse_beta(text, d):
    from .observables import ObservableSpec

    beta = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        cell, val = part.split(":")
        beta[tuple(_ints(cell))] = float(val)
    if any(len(c) != d for c in beta):
        raise UsageError(f"observable cells must have {d} coordinate(s)")
    return ObservableSpec(beta, name="beta")


def cmd_oracle_moments(args):
    from .observables import ObservableSpec
    from .rw_oracle import exact_moment_dp

    step = _step_from_args(args)
    if args.n is None:
        raise UsageError("--n is required")
    spec = _parse_beta(args.beta, step.dim) if args.beta else ObservableSpec.local_time(step.dim)
    cps = _ints(args.checkpoints) if args.checkpoints else [args.n]
    mt = exact_moment_dp(step, spec, args.moments, args.n, checkpoints=cps)
    seq = step.normalization()
    print("checkpoint_n," + ",".join(f"E[X^{j}]" for j in range(1, args.moments + 1)) + ",A_n,leak")
    for i, n in enumerate(mt.checkpoints):
        vals = ",".join(repr(float(v)) for v in mt.moments[i, 1:])
        print(f"{n},{vals},{seq.A(int(n)) if n else 0.0!r},{mt.leaked_mass[i]:.3g}")
    return 0


def cmd_limit_sample(args):
    from .limit_laws import LimitSpec, sample_local_time_limit, sample_mixture
    from .rng import generator

    d = args.d or 1
    alpha = args.alpha or 2.0
    try:
        spec = LimitSpec(alpha, d, args.phi0, args.sigma_sq)
    except ValueError as e:
        raise UsageError(str(e)) from None
    rng = generator(args.seed or 0)
    size = args.trajectories or 10**5
    x = sample_mixture(spec, rng, size) if args.kind == "mixture" else sample_local_time_limit(spec, rng, size)
    out = _out_dir(args)
    np.savetxt(out / "limit_sample.csv", x, header="value", comments="")
    _record(args, outputs=["limit_sample.csv"])
    print(f"{args.kind}: n={size} mean={x.mean():.6g} m2={np.mean(x**2):.6g} m4={np.mean(x**4):.6g}")
    return 0


def cmd_verify(args):
    from .acceptance import CHECKS

    names = args.names or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {unknown}; known: {', '.join(CHECKS)}")
    results = []
    for n in names:
        r = CHECKS[n]()
        print(r.line(), flush=True)
        results.append({"check": n, "passed": r.passed, "seconds": r.seconds,
                        "details": json.loads(json.dumps(r.details, default=_jsonable))})
    out = _out_dir(args)
    (out / "verify.json").write_text(json.dumps(results, indent=1))
    _record(args, outputs=["verify.json"])
    return 0 if all(r["passed"] for r in results) else 2


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def cmd_report(args):
    from .stats import MomentReport

    if not args.input:
        raise UsageError("--input is required")
    try:
        rep = MomentReport.from_json(Path(args.input).read_text())
    except FileNotFoundError:
        raise UsageError(f"report not found: {args.input}") from None
    print(f"config {rep.config_hash} seed {rep.seed}" + (f" error: {rep.error}" if rep.error else ""))
    for k, v in sorted(rep.diagnostics.items()):
        print(f"  {k}: {v}")
    _print_rows(rep.rows)
    return 0


def _print_rows(rows):
    if not rows:
        return
    print(f"{'n':>10} {'statistic':<28} {'value':>14} {'stderr':>12} {'predicted':>12}  provenance")
    for r in rows:
        pred = "" if r["predicted"] is None else f"{float(r['predicted']):.6g}"
        se = "" if r["stderr"] is None else f"{float(r['stderr']):.3g}"
        print(f"{r['checkpoint_n']:>10} {r['statistic']:<28} {float(r['value']):>14.6g} {se:>12} {pred:>12}  "
              f"{r['provenance']}")


COMMANDS = {
    "validate": cmd_validate,
    "classify": cmd_classify,
    "simulate-map": cmd_simulate_map,
    "simulate-flow": cmd_simulate_flow,
    "oracle-occupation": cmd_oracle_occupation,
    "oracle-moments": cmd_oracle_moments,
    "limit-sample": cmd_limit_sample,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lorentzgas", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--n", type=int)
        s.add_argument("--trajectories", type=int)
        s.add_argument("--checkpoints")
        s.add_argument("--alpha", type=float)
        s.add_argument("--d", type=int)
        if name in ("oracle-occupation", "oracle-moments"):
            s.add_argument("--step", default="lazy1d", help="lazy1d, lazy2d, srw1d, right1d or stable")
            s.add_argument("--cutoff", type=int, default=10**4, help="cutoff of the stable step")
        if name == "oracle-occupation":
            s.add_argument("--a", help="lattice point, e.g. 0 or 1,-2")
        if name == "oracle-moments":
            s.add_argument("--beta", help="observable as 'cell:value;cell:value', e.g. '0:1;1:-1'")
            s.add_argument("--moments", type=int, default=4)
        if name == "classify":
            s.add_argument("--height", type=int)
        if name == "limit-sample":
            s.add_argument("--kind", choices=("local-time", "mixture"), default="local-time")
            s.add_argument("--phi0", type=float, default=1.0)
            s.add_argument("--sigma-sq", type=float, default=1.0)
        if name == "verify":
            s.add_argument("names", nargs="*", help="checks to run (default: all)")
        if name == "report":
            s.add_argument("--input")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = COMMANDS[args.command](args)
    except (UsageError, ValueError) as e:  # ConfigError is a ValueError
        print(f"error: {e}", file=sys.stderr)
        return 1
    _write_manifest(args)
    return code


if __name__ == "__main__":
    sys.exit(main())
