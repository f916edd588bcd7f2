"""Regenerate the bundled degree-9 sign stages and report their composite error."""

import argparse

import numpy as np

from hevote.sign import SignConfig, build_sign, contraction_polynomial, fit_lifting_polynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g-lower", type=float, default=2**-3.5)
    ap.add_argument("--f-lower", type=float, default=None, help="fit f too instead of the closed-form contraction")
    args = ap.parse_args()
    g = fit_lifting_polynomial(args.g_lower)
    f = contraction_polynomial(9) if args.f_lower is None else fit_lifting_polynomial(args.f_lower)
    print("g =", g.coeffs[1::2].tolist())
    print("f =", f.coeffs[1::2].tolist())
    sign = build_sign(SignConfig(f=f, g=g))
    for alpha in (4, 5, 6, 8, 10, 12):
        xs = np.linspace(2.0**-alpha, 1.0, 200_001)
        print(f"alpha={alpha:2d}  max error {np.max(np.abs(sign(xs) - 1.0)):.4g}")


if __name__ == "__main__":
    main()
