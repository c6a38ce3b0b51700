"""Recompute the frozen p = 2 oracle values used by the test suite.

Two independent routes: dense QZ on the pencil (K, B_g), and bisection on the
Cholesky definiteness of K - lam B_g. They must agree before a value is frozen.
"""
import argparse
import json

from steklov_lab.eigen import dense_oracle_p2, lambda1_by_definiteness
from steklov_lab.mesh import box_mesh
from steklov_lab.weights import parse_weight, sample_on_boundary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weight", default="composite:g3-box:q=2")
    ap.add_argument("--n", type=int, default=20)
    args = ap.parse_args()

    w = parse_weight(args.weight)
    m = box_mesh(w.R, args.n)
    g = sample_on_boundary(w, m)
    qz = dense_oracle_p2(m, g)
    bis = lambda1_by_definiteness(m, g)
    rel = abs(qz.lambda1 - bis) / qz.lambda1
    print(json.dumps({
        "weight": args.weight, "n": args.n, "n_vertices": m.n_vertices,
        "lambda1_qz": repr(qz.lambda1), "lambda1_bisection": repr(bis),
        "relative_disagreement": rel, "gap": repr(qz.gap()),
    }, indent=2))
    if rel > 1e-12:
        raise SystemExit("oracles disagree; do not freeze")


if __name__ == "__main__":
    main()
