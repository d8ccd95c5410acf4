"""Print the eigenform catalog with freshly measured eigen-residuals."""

import argparse

from vsubmersion import models as M
from vsubmersion.geometry import eigen_residual
from vsubmersion.harness import sample_points


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'name':<26}{'p':>2}{'lambda':>8}{'mu':>6}{'base res':>11}{'total res':>11}  provenance")
    for e in M.eigenform_catalog():
        Y = sample_points(e.model.base, args.samples, args.seed)
        X = sample_points(e.model, args.samples, args.seed + 1)
        rb = eigen_residual(e.form, Y, e.base_eigenvalue).max()
        rt = eigen_residual(e.total_form(), X, e.total_eigenvalue).max()
        print(f"{e.name:<26}{e.degree:>2}{e.base_eigenvalue:>8g}{e.total_eigenvalue:>6g}"
              f"{rb:>11.1e}{rt:>11.1e}  {e.provenance}")


if __name__ == "__main__":
    main()
