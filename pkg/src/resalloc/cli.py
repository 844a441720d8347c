"""Command-line interface: ``resalloc generate|solve|certify|sweep|compare``.

Exit codes: 0 on success, 1 on usage or I/O errors, 2 when a run that a
convergence theorem covers violates its bound.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path


from .certificates import (
    bounds_for,
    measure,
    p_max_bound,
    radius,
    theorem1_requirements,
    theorem2_iterations,
    theorem3_iterations,
)
from .errors import InvalidInputError, UnsupportedInstanceError
from .experiments import ExperimentSpec, emit_plots, generate_instance, run_experiment, versions, write_sidecar
from .model import dumps_instance, load_instance
from .solvers import METHODS, DEFAULT_MAX_ITERATIONS, SolverConfig, solve

OUTPUT_ENV = "RESALLOC_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text!r}")
    return v


def _float_list(text: str) -> list:
    try:
        vals = [_positive_float(t) for t in text.split(",") if t.strip()]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must be nonempty")
    return vals


def _method_list(text: str) -> list:
    vals = [t.strip() for t in text.split(",") if t.strip()]
    bad = [v for v in vals if v not in METHODS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"methods must come from {', '.join(METHODS)}")
    return vals


def _out_dir(value) -> Path:
    return Path(value or os.environ.get(OUTPUT_ENV) or ".")


def _sidecar(path: Path, argv) -> None:
    payload = {
        "argv": ["resalloc", *argv],
        "file": path.name,
        "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        "versions": versions(),
    }
    write_sidecar(path, payload)


def _add_spec_flags(p, mu_list: bool):
    p.add_argument("--n", type=_positive_int, default=100, help="number of producers (default 100)")
    p.add_argument("--C", type=_positive_float, default=10000.0, help="demand (default 10000)")
    if mu_list:
        p.add_argument("--mu", type=_float_list, default=[2.0], help="comma-separated moduli (default 2)")
    else:
        p.add_argument("--mu", type=_positive_float, default=2.0, help="strong convexity modulus (default 2)")
    p.add_argument("--alpha-dist", choices=("uniform", "normal"), default="uniform")
    p.add_argument("--name", default="resalloc", help="experiment name, part of the RNG key")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random quadratic instance")
    _add_spec_flags(g, mu_list=False)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="instance JSON path")

    s = sub.add_parser("solve", help="run a solver and certify the result")
    s.add_argument("--instance", required=True)
    s.add_argument("--method", choices=METHODS, default="composite")
    s.add_argument("--iters", type=int, help="iteration count (cap for subgradient)")
    s.add_argument("--eps", type=_positive_float, help="target accuracy")
    s.add_argument("--p0", type=float, help="common starting price (default 0)")
    s.add_argument("--L", type=_positive_float, dest="L_override", help="override the Lipschitz constant")
    s.add_argument("--cadence", type=_positive_int, help="record every k-th iteration")
    s.add_argument("--max-iters", type=_positive_int, default=DEFAULT_MAX_ITERATIONS)
    s.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")

    c = sub.add_parser("certify", help="print a-priori constants and bounds")
    c.add_argument("--instance", required=True)
    c.add_argument("--method", choices=METHODS, default="composite")
    c.add_argument("--iters", type=int)
    c.add_argument("--eps", type=_positive_float)
    c.add_argument("--json", action="store_true", help="print JSON instead of a table")

    for name, helptext in (("sweep", "multi-seed runs over a list of moduli"),
                           ("compare", "final metrics of all methods side by side")):
        w = sub.add_parser(name, help=helptext)
        _add_spec_flags(w, mu_list=(name == "sweep"))
        w.add_argument("--seeds", type=_positive_int, default=20, help="number of seeds 0..k-1 (default 20)")
        w.add_argument("--iters", type=_positive_int, default=1000)
        w.add_argument("--eps", type=_positive_float, help="subgradient accuracy")
        w.add_argument("--workers", type=_positive_int)
        w.add_argument("--cadence", type=_positive_int)
        w.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        w.add_argument("--svg", action="store_true", help="also render SVG charts")
        default = "composite,accelerated" if name == "sweep" else ",".join(METHODS)
        w.add_argument("--methods", type=_method_list, default=_method_list(default))
    return parser


# --- commands ----------------------------------------------------------------


def cmd_generate(args, argv) -> int:
    spec = ExperimentSpec(n=args.n, C=args.C, mu=args.mu, alpha_dist=args.alpha_dist, name=args.name)
    inst = generate_instance(spec, args.seed)
    out = Path(args.out)
    out.write_text(dumps_instance(inst))
    _sidecar(out, argv)
    print(f"wrote {out}")
    return EXIT_OK


def _iterations(args, inst, method):
    if args.iters is not None and args.iters < 1:
        raise UsageError(f"--iters must be at least 1, got {args.iters}")
    if method == "subgradient":
        if args.eps is None:
            raise UsageError("--method subgradient requires --eps")
        return args.iters
    if args.iters is not None:
        return args.iters
    if args.eps is not None:
        return (theorem2_iterations if method == "composite" else theorem3_iterations)(inst, args.eps)
    raise UsageError(f"--method {method} requires --iters or --eps")


def cmd_solve(args, argv) -> int:
    inst = load_instance(args.instance)
    N = _iterations(args, inst, args.method)
    cfg = SolverConfig(
        method=args.method, iterations=N, eps=args.eps, p0=args.p0,
        L_override=args.L_override, record_cadence=args.cadence, max_iterations=args.max_iters,
    )
    run = solve(inst, cfg)
    cert = measure(inst, run)

    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{Path(args.instance).stem}_{args.method}"
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "dual_value", "primal_avg", "duality_gap", "infeasibility"])
        for r, phi in zip(run.history, run.series("dual_value")):
            primal = inst.total_cost_matrix(inst.view(r.x_avg))
            w.writerow([r.t, repr(float(phi)), repr(float(primal)), repr(float(r.duality_gap)),
                        repr(float(r.infeasibility))])
    cert_path = out / f"{stem}_certificate.json"
    cert_path.write_text(json.dumps(cert.to_dict(), indent=2) + "\n")
    for p in (csv_path, cert_path):
        _sidecar(p, argv)

    print(f"method={run.method} N={run.N} gap={cert.measured_gap:.6g} (bound {cert.bound_gap:.6g}) "
          f"infeasibility={cert.measured_infeas:.6g} (bound {cert.bound_infeas:.6g})")
    if not cert.certified:
        reason = "run was capped below the theorem iteration count" if run.method == "subgradient" \
            else "non-default Lipschitz constant"
        print(f"note: bounds not certified ({reason})", file=sys.stderr)
    if cert.violated:
        print("certificate FAILED: a proven bound is violated", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"wrote {csv_path} and {cert_path}")
    return EXIT_OK


def cmd_certify(args, argv) -> int:
    inst = load_instance(args.instance)
    pmax = p_max_bound(inst)
    rows = {"n": inst.n, "m": inst.m, "mu": inst.mu, "p_max": pmax, "R": radius(inst, pmax), "L": inst.L}
    if args.method == "subgradient":
        if inst.kind != "scalar":
            raise UsageError("subgradient bounds are defined for scalar instances")
        if args.eps is None:
            raise UsageError("--method subgradient requires --eps")
        req = theorem1_requirements(inst, args.eps)
        rows.update(eps=args.eps, h=req["h"], N=req["N"], gap_bound=args.eps, infeas_bound=req["infeas_tol"])
    else:
        N = _iterations(args, inst, args.method)
        rows["N"] = N
        rows.update(bounds_for(inst, N, args.method))
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        width = max(len(k) for k in rows)
        for k, v in rows.items():
            print(f"{k:<{width}}  {v!r}" if isinstance(v, int) else f"{k:<{width}}  {float(v)!r}")
    return EXIT_OK


def _spec_from(args, methods) -> ExperimentSpec:
    return ExperimentSpec(
        n=args.n, C=args.C, alpha_dist=args.alpha_dist, mu=args.mu,
        seeds=tuple(range(args.seeds)), methods=tuple(methods), N=args.iters,
        record_cadence=args.cadence, eps=args.eps, name=args.name, workers=args.workers,
    )


def _report(result) -> None:
    for key, err in sorted(result.failures.items()):
        print(f"failed cell method={key[0]} mu={key[1]:g} seed={key[2]}: {err}", file=sys.stderr)


def _write_experiment(result, args, argv) -> None:
    if result.succeeded:
        for p in emit_plots(result, _out_dir(args.out), svg=args.svg):
            if not p.name.endswith(".meta.json"):
                _sidecar(p, argv)


def cmd_sweep(args, argv) -> int:
    spec = _spec_from(args, args.methods)
    result = run_experiment(spec)
    _report(result)
    _write_experiment(result, args, argv)
    print(f"{'mu':>8}  {'method':<12}  {'runs':>4}  {'mean gap':>14}  {'mean |gap|':>14}  {'infeasibility':>14}")
    for row in result.summary():
        if "duality_gap" in row:
            print(f"{row['mu']:>8g}  {row['method']:<12}  {row['runs']:>4}  {row['duality_gap']:>14.6g}  "
                  f"{row['abs_gap']:>14.6g}  {row['infeasibility']:>14.6g}")
        else:
            print(f"{row['mu']:>8g}  {row['method']:<12}  {row['runs']:>4}  {'failed':>14}")
    return EXIT_OK if result.succeeded else EXIT_USAGE


def cmd_compare(args, argv) -> int:
    spec = _spec_from(args, args.methods)
    result = run_experiment(spec)
    _report(result)
    _write_experiment(result, args, argv)
    print(f"{'method':<12}  {'runs':>4}  {'dual value':>14}  {'duality gap':>14}  {'|gap|':>14}  {'infeasibility':>14}")
    for row in result.summary():
        if "duality_gap" in row:
            print(f"{row['method']:<12}  {row['runs']:>4}  {row['dual_value']:>14.6g}  {row['duality_gap']:>14.6g}  "
                  f"{row['abs_gap']:>14.6g}  {row['infeasibility']:>14.6g}")
        else:
            print(f"{row['method']:<12}  {row['runs']:>4}  {'failed':>14}")
    return EXIT_OK if result.succeeded else EXIT_USAGE


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"resalloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, UnsupportedInstanceError, OSError) as exc:
        print(f"resalloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
