"""Command-line entry point: ``python -m steklov_lab <subcommand> ...``.

Structured reports go to stdout as JSON lines, series to CSV files, and
figures to SVG only when ``--plot`` is given. Floats carry 17 significant
digits so that reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bifurcation import (
    CSV_HEADER,
    BifurcationError,
    ContinuationConfig,
    branch_from_first,
    classify_branch,
    extrapolate_to_zero,
    no_bifurcation_scan,
)
from .eigen import (
    EigenError,
    EigenOptions,
    dense_oracle_p2,
    first_eigenpair,
    h1_alignment,
    principality_check,
    simplicity_isolation_probe,
)
from .fem import PerturbationSpec
from .lorentz import LZParams, membership_F_d, membership_G_d, norm_double_star, quasi_norm
from .mesh import BoundaryFunction, Mesh, MeshError, load_mesh, make_mesh
from .rearrangement import decreasing_rearrangement
from .weights import (
    WeightError,
    admissibility,
    load_weight_csv,
    parse_weight,
    perturbation_weight,
    sample_on_boundary,
    singular_profile,
)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output


def fmt(x) -> str:
    return format(float(x), ".17g")


def dumps(obj) -> str:
    """JSON with every float printed to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "null"
        if math.isinf(x):
            return json.dumps("inf" if x > 0 else "-inf")
        return fmt(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit(obj, out=None) -> None:
    print(dumps(obj), file=out or sys.stdout)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def plot_branch(path, branches, lam1) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "steklov-lab"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for label, br in branches:
        ax.plot([b.lam for b in br], [b.w1p_norm for b in br], marker=".", label=label)
    ax.axvline(lam1, color="k", lw=0.6, ls="--")
    ax.set_xlabel("lambda")
    ax.set_ylabel("W1p norm")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ------------------------------------------------------------------ inputs


def p_value(s: str) -> float:
    try:
        p = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not 1 < p <= 2:
        raise argparse.ArgumentTypeError("p must lie in (1, 2]")
    return p


def exponent(s: str) -> float:
    if s.lower() in ("inf", "infinity"):
        return math.inf
    return float(s)


def add_mesh_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--mesh", help="text mesh file (nv nt / vertices / triangles)")
    ap.add_argument("--domain", choices=["square", "disk", "rect", "box"],
                    help="built-in mesh (default: the weight's own domain)")
    ap.add_argument("--n", type=int, help="edges per side (square/box) or boundary edges (disk)")
    ap.add_argument("--R", type=float, help="box half-width")
    ap.add_argument("--grading", type=float, default=1.0, help="box grading toward the singular point")


def add_weight_args(ap: argparse.ArgumentParser, required=True) -> None:
    ap.add_argument("--weight", required=required,
                    help="catalog name (g1-circle, g2-box, h-box, g3-box:q=Q, const:C, composite:BASE[-C]) or CSV file")


def resolve_mesh(args, spec) -> Mesh:
    if args.mesh:
        return load_mesh(args.mesh)
    domain = args.domain
    R = args.R
    if domain is None:
        tag = spec.domain_tag if spec is not None else "any"
        domain = {"disk": "disk", "box": "box"}.get(tag, "square")
    if spec is not None and spec.domain_tag == "box" and R is None:
        R = spec.R
    n = args.n
    if n is None:
        n = {"disk": 256, "square": 16}.get(domain, 20)
    return make_mesh(domain, n, R, args.grading)


def resolve_weight(args):
    """Returns ``(spec or None, path or None)``."""
    name = args.weight
    if name.endswith(".csv") or Path(name).is_file():
        return None, name
    return parse_weight(name), None


def sampled_weight(args):
    spec, path = resolve_weight(args)
    mesh = resolve_mesh(args, spec)
    g = load_weight_csv(path, mesh) if path else sample_on_boundary(spec, mesh)
    return spec, mesh, g


# --------------------------------------------------------------- commands


def cmd_rearrange(args) -> int:
    _, mesh, g = sampled_weight(args)
    prof = decreasing_rearrangement(g)
    rows = prof.to_csv_rows()
    if args.out:
        write_csv(args.out, ("t", "left", "right"), rows)
    else:
        print("t,left,right")
        for r in rows:
            print(",".join(fmt(v) for v in r))
    emit({"command": "rearrange", "weight": args.weight, "steps": len(prof.levels), "T": prof.T,
          "sup": prof.sup, "integral": prof.integral(), "n_edges": mesh.n_edges}, sys.stderr if not args.out else None)
    return EXIT_OK


def cmd_norm(args) -> int:
    par = LZParams(args.p, args.q, args.alpha)
    spec, path = resolve_weight(args)
    if args.analytic:
        if spec is None:
            raise UsageError("--analytic needs a catalog weight")
        prof = singular_profile(spec)
        source = "analytic"
    else:
        _, _, g = sampled_weight(args)
        prof = decreasing_rearrangement(g)
        source = "sampled"
    out = {"command": "norm", "weight": args.weight, "source": source, "p": args.p, "q": args.q,
           "alpha": args.alpha, "quasi_norm": quasi_norm(prof, par)}
    if args.p > 1 and source == "sampled":
        out["norm_double_star"] = norm_double_star(prof, par)
    emit(out)
    return EXIT_OK


def cmd_check_weight(args) -> int:
    spec, path = resolve_weight(args)
    out = {"command": "check-weight", "weight": args.weight}
    if args.klass:
        kind, _, d = args.klass.partition(":")
        if kind.upper() not in ("F", "G") or not d:
            raise UsageError("--class must look like F:2 or G:1")
        if spec is not None and not args.sampled:
            prof = singular_profile(spec)
        else:
            _, _, g = sampled_weight(args)
            prof = decreasing_rearrangement(g)
        rep = membership_F_d(prof, float(d)) if kind.upper() == "F" else membership_G_d(prof, float(d))
        out.update(rep.to_dict())
        if not args.samples:
            out.pop("samples", None)
    if args.p is not None:
        if spec is not None and not args.sampled:
            mesh = resolve_mesh(args, spec) if spec.domain_tag == "any" else None
            rep = admissibility(spec, args.p, mesh=mesh)
        else:
            _, _, g = sampled_weight(args)
            rep = admissibility(g, args.p)
        d = rep.to_dict()
        if not args.samples:
            d["membership"].pop("samples", None)
        out["admissibility"] = d
        out["p"] = args.p
    if not args.klass and args.p is None:
        raise UsageError("give --class and/or --p")
    emit(out)
    return EXIT_OK


def _check_admissible(spec, mesh, g, p) -> None:
    rep = admissibility(spec if spec is not None else g, p, mesh=mesh)
    if not rep.admissible:
        why = []
        if not rep.gplus_nontrivial:
            why.append("g+ vanishes")
        if not rep.integral_g < 0:
            why.append(f"integral of g = {rep.integral_g:.6g} >= 0")
        if rep.membership.verdict != "member":
            why.append(f"{rep.membership.klass} verdict {rep.membership.verdict}")
        raise WeightError("inadmissible weight: " + "; ".join(why))


def _solve(args, seeds: int | None = None):
    spec, mesh, g = sampled_weight(args)
    _check_admissible(spec, mesh, g, args.p)
    opts = EigenOptions(seeds=seeds or args.seeds, tol=args.tol, rng_seed=args.rng_seed, max_iter=args.max_iter)
    return spec, mesh, g, first_eigenpair(mesh, g, args.p, opts)


def eigen_report(mesh, g, p, res, oracle: bool) -> dict:
    out = {"command": "eigen"}
    out.update(res.to_dict())
    out["principality"] = principality_check(res).to_dict()
    probe = simplicity_isolation_probe(mesh, g, p, res)
    out["simplicity"] = probe.to_dict()
    if oracle:
        orc = dense_oracle_p2(mesh, g)
        out["oracle"] = orc.to_dict()
        if orc.lambda1 is not None:
            out["oracle"]["relative_error"] = abs(res.lambda1 - orc.lambda1) / orc.lambda1
            out["oracle"]["alignment"] = h1_alignment(res.phi1.coefficients, orc.vector1, mesh)
    return out


def cmd_eigen(args) -> int:
    if args.oracle and args.p != 2:
        raise UsageError("--oracle is only available for p = 2")
    spec, mesh, g, res = _solve(args)
    emit(eigen_report(mesh, g, args.p, res, args.oracle))
    if args.phi_out:
        write_csv(args.phi_out, ("x", "y", "phi"),
                  [(x, y, v) for (x, y), v in zip(mesh.vertices, res.phi1.coefficients)])
    return EXIT_OK


def _f_weight(args, mesh, g) -> BoundaryFunction:
    name = args.f_weight
    if name == "auto":
        return perturbation_weight(g)
    if name == "zero":
        return mesh.constant(0.0)
    spec = parse_weight(name)
    return sample_on_boundary(spec, mesh)


def cmd_bifurcate(args) -> int:
    spec, mesh, g, res = _solve(args)
    gamma = args.gamma if args.gamma is not None else args.p + 1.0
    pert = PerturbationSpec(gamma, _f_weight(args, mesh, g), args.p)
    cfg = ContinuationConfig(ds=args.ds, ds_max=max(args.ds_max, args.ds), max_points=args.max_points,
                             direction=args.direction, rng_seed=args.rng_seed)
    br = branch_from_first(mesh, g, pert, args.p, res, cfg)
    if args.out:
        write_csv(args.out, CSV_HEADER, [b.row() for b in br])
    cls = classify_branch(br, cfg)
    est, spread = extrapolate_to_zero(br)
    emit({"command": "bifurcate", "lambda1": res.lambda1, "gamma": gamma, "points": len(br),
          "stop_reason": br.stop_reason, "classification": cls.to_dict(), "lambda_at_zero_norm": est,
          "extrapolation_spread": spread, "fd_jacobian_discrepancy": br.fd_discrepancy,
          "max_residual": max(b.residual_norm for b in br)})
    if args.plot:
        plot_branch(args.plot, [(f"direction {args.direction:+d}", br)], res.lambda1)
    return EXIT_OK


def cmd_scan(args) -> int:
    # --seeds counts Newton seeds here; the eigensolve keeps its default seed count
    spec, mesh, g, res = _solve(args, seeds=EigenOptions.seeds)
    gamma = args.gamma if args.gamma is not None else args.p + 1.0
    pert = PerturbationSpec(gamma, _f_weight(args, mesh, g), args.p)
    lam = args.lam if args.lam is not None else args.lambda_factor * res.lambda1
    rep = no_bifurcation_scan(mesh, g, pert, args.p, lam, tuple(args.rho), args.seeds,
                              rng_seed=args.rng_seed, eps=res.epsilon_used)
    out = {"command": "scan", "lambda1": res.lambda1}
    out.update(rep.to_dict())
    out["nontrivial_below_rho"] = {repr(r): rep.nontrivial_below(r) for r in args.rho}
    emit(out)
    return EXIT_OK


def cmd_demo(args) -> int:
    """Composite g3 weight on the box, admissibility, eigenpair with oracle, both branches."""
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    p = 2.0
    name = "composite:g3-box:q=2"
    spec = parse_weight(name)
    mesh = make_mesh("box", args.n, spec.R)
    g = sample_on_boundary(spec, mesh)
    adm = admissibility(spec, p)
    d = adm.to_dict()
    d["membership"].pop("samples", None)
    with open(outdir / "report.jsonl", "w") as fh:
        emit({"step": "admissibility", "weight": name, **d}, fh)
        if not adm.admissible:
            raise WeightError("demo weight unexpectedly inadmissible")
        res = first_eigenpair(mesh, g, p, EigenOptions(rng_seed=args.rng_seed))
        emit({"step": "eigen", **eigen_report(mesh, g, p, res, True)}, fh)
        write_csv(outdir / "phi1.csv", ("x", "y", "phi"),
                  [(x, y, v) for (x, y), v in zip(mesh.vertices, res.phi1.coefficients)])
        write_csv(outdir / "rearrangement.csv", ("t", "left", "right"),
                  decreasing_rearrangement(g).to_csv_rows())
        pert = PerturbationSpec(3.0, perturbation_weight(g), p)
        branches = []
        for direction in (1, -1):
            cfg = ContinuationConfig(direction=direction, rng_seed=args.rng_seed)
            br = branch_from_first(mesh, g, pert, p, res, cfg)
            tag = "plus" if direction > 0 else "minus"
            write_csv(outdir / f"branch_{tag}.csv", CSV_HEADER, [b.row() for b in br])
            est, spread = extrapolate_to_zero(br)
            emit({"step": "bifurcate", "direction": direction, "points": len(br),
                  "classification": classify_branch(br, cfg).to_dict(), "lambda_at_zero_norm": est,
                  "relative_gap": abs(est - res.lambda1) / res.lambda1}, fh)
            branches.append((f"direction {direction:+d}", br))
    if args.plot:
        plot_branch(outdir / "bifurcation.svg", branches, res.lambda1)
    print((outdir / "report.jsonl").read_text(), end="")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steklov-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rearrange", help="decreasing rearrangement of a sampled weight as CSV")
    add_weight_args(s)
    add_mesh_args(s)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_rearrange)

    s = sub.add_parser("norm", help="Lorentz-Zygmund quasi-norm of a weight")
    add_weight_args(s)
    add_mesh_args(s)
    s.add_argument("--p", type=exponent, required=True)
    s.add_argument("--q", type=exponent, required=True)
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--analytic", action="store_true", help="use the closed-form profile of a catalog weight")
    s.set_defaults(func=cmd_norm)

    s = sub.add_parser("check-weight", help="class membership (F:d, G:d) and admissibility for p")
    add_weight_args(s)
    add_mesh_args(s)
    s.add_argument("--class", dest="klass", help="F:<d> or G:<d>")
    s.add_argument("--p", type=p_value, help="also check admissibility for this p")
    s.add_argument("--sampled", action="store_true", help="use the sampled step profile instead of the closed form")
    s.add_argument("--samples", action="store_true", help="include the grid samples in the report")
    s.set_defaults(func=cmd_check_weight)

    def solver_args(s):
        add_weight_args(s)
        add_mesh_args(s)
        s.add_argument("--p", type=p_value, default=2.0)
        s.add_argument("--seeds", type=int, default=8)
        s.add_argument("--tol", type=float, default=1e-9)
        s.add_argument("--max-iter", type=int, default=4000)
        s.add_argument("--rng-seed", type=int, default=0)

    s = sub.add_parser("eigen", help="first eigenpair with principality and simplicity evidence")
    solver_args(s)
    s.add_argument("--oracle", action="store_true", help="compare with the dense p = 2 oracle")
    s.add_argument("--phi-out", help="CSV path for the nodal values of phi1")
    s.set_defaults(func=cmd_eigen)

    def pert_args(s):
        s.add_argument("--gamma", type=float, help="perturbation exponent (default p + 1)")
        s.add_argument("--f-weight", default="auto",
                       help="auto (smoothed indicator of g > 0), zero, or a catalog weight name")

    s = sub.add_parser("bifurcate", help="continuation of the branch from (lambda1, 0)")
    solver_args(s)
    pert_args(s)
    s.add_argument("--ds", type=float, default=2e-3)
    s.add_argument("--ds-max", type=float, default=0.05)
    s.add_argument("--max-points", type=int, default=60)
    s.add_argument("--direction", type=int, choices=[1, -1], default=1)
    s.add_argument("--out", help="CSV path for the branch")
    s.add_argument("--plot", help="SVG path for the bifurcation diagram")
    s.set_defaults(func=cmd_bifurcate)

    s = sub.add_parser("scan", help="Newton scan for small nontrivial solutions at fixed lambda")
    solver_args(s)
    pert_args(s)
    grp = s.add_mutually_exclusive_group()
    grp.add_argument("--lambda", dest="lam", type=float)
    grp.add_argument("--lambda-factor", type=float, default=0.5, help="lambda as a multiple of lambda1")
    s.add_argument("--rho", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    s.set_defaults(func=cmd_scan)
    s.set_defaults(seeds=50)

    s = sub.add_parser("demo", help="p = 2 pipeline: admissibility, eigenpair with oracle, branches")
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--out-dir", default="demo_out")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_demo)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"steklov-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WeightError, EigenError, BifurcationError, MeshError, ValueError, OSError) as exc:
        emit({"status": "error", "kind": type(exc).__name__, "message": str(exc)})
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run())
