"""Bifurcation diagrams (lambda vs W1p norm) for p = 2 and p = 1.5.

Traces both directions of the branch from (lambda1, 0), the f = 0 control,
and saves one PNG per exponent.
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from steklov_lab.bifurcation import ContinuationConfig, branch_from_first, extrapolate_to_zero  # noqa: E402
from steklov_lab.eigen import first_eigenpair  # noqa: E402
from steklov_lab.fem import PerturbationSpec, zero_perturbation  # noqa: E402
from steklov_lab.mesh import box_mesh  # noqa: E402
from steklov_lab.weights import parse_weight, perturbation_weight, sample_on_boundary  # noqa: E402

WEIGHTS = {2.0: "composite:g3-box:q=2", 1.5: "composite:g3-box:q=4"}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--out-dir", default="branch_out")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for p, name in WEIGHTS.items():
        w = parse_weight(name)
        m = box_mesh(w.R, args.n)
        g = sample_on_boundary(w, m)
        res = first_eigenpair(m, g, p)
        spec = PerturbationSpec.default(perturbation_weight(g), p)
        fig, ax = plt.subplots(figsize=(5, 4))
        for d, style in ((1, "-"), (-1, "--")):
            br = branch_from_first(m, g, spec, p, res, ContinuationConfig(direction=d))
            ax.plot([b.lam for b in br], [b.w1p_norm for b in br], style, label=f"direction {d:+d}")
            if d == 1:
                est, spread = extrapolate_to_zero(br)
                print(f"p={p:g}: lambda1={res.lambda1:.10f} extrapolated={est:.10f} "
                      f"spread={spread:.1e} points={len(br)} stop={br.stop_reason}")
        flat = branch_from_first(m, g, zero_perturbation(m, p), p, res, ContinuationConfig(max_points=30))
        ax.plot([b.lam for b in flat], [b.w1p_norm for b in flat], ":", label="f = 0")
        ax.axvline(res.lambda1, color="grey", lw=0.5)
        ax.set_xlabel("lambda")
        ax.set_ylabel("W1p norm")
        ax.set_title(f"p = {p:g}, {name}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"branch_p{p:g}.png", dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    main()
