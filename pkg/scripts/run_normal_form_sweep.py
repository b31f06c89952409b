#!/usr/bin/env python3
"""Near-identity size of the normal-form map and the size of the error term E.

For Gaussian data at each epsilon: ||u - v|| with v the pulled-back state, and
||E|| extracted from a short trajectory. ``--split`` also reports the part of E
carried by the resonant self-interaction 2|v|^2 v and what remains after removing it.

    python scripts/run_normal_form_sweep.py --eps 0.4 0.2 0.1 --N 64
"""
import argparse
import time

import numpy as np

from nlsquasi.analysis import error_term_report, nearness_report, normal_form_sample
from nlsquasi.lattice import NormSpec, weighted_norm
from nlsquasi.nfflow import NormalFormMap

NORMS = (NormSpec(np.inf), NormSpec(2.0), NormSpec(1.0))


def fmt_norms(state):
    return "  ".join(f"{weighted_norm(state, ns):11.4e}" for ns in NORMS)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--h", type=float, default=1e-4, help="snapshot spacing")
    ap.add_argument("--dt", type=float, default=1e-5)
    ap.add_argument("--substeps", type=int, default=16)
    ap.add_argument("--f2-substeps", type=int, default=4)
    ap.add_argument("--no-check", action="store_true", help="skip the substep doubling check")
    ap.add_argument("--split", action="store_true")
    args = ap.parse_args()

    nf = NormalFormMap(substeps=args.substeps, f2_substeps=args.f2_substeps, check=not args.no_check,
                       override=args.N > 64)
    samples = []
    print(f"{'eps':>6}  {'quantity':<10} {'linf':>11}  {'l2':>11}  {'l1':>11}")
    for eps in args.eps:
        t0 = time.perf_counter()
        s = normal_form_sample(eps, args.N, nf, args.h, args.dt)
        samples.append(s)
        print(f"{eps:6.3f}  {'u - v':<10} {fmt_norms(s.u - s.v)}")
        print(f"{'':6}  {'E':<10} {fmt_norms(s.E)}   ({time.perf_counter() - t0:.0f}s)")
        if args.split:
            c = s.v.coeffs
            self_part = s.v.replace(-2j * np.abs(c) ** 2 * c)
            print(f"{'':6}  {'2|v|^2v':<10} {fmt_norms(self_part)}")
            print(f"{'':6}  {'E - that':<10} {fmt_norms(s.E - self_part)}")
    if len(samples) >= 3:
        near = nearness_report(samples, NORMS)
        err = error_term_report(samples, NORMS)
        print("\nslopes     " + "  ".join(f"{ns.label:>11}" for ns in NORMS))
        print("u - v      " + "  ".join(f"{near['fits'][ns.label].slope:11.3f}" for ns in NORMS))
        print("E          " + "  ".join(f"{err[ns.label].slope:11.3f}" for ns in NORMS))
        print("l2 mismatch " + ", ".join(f"{e}: {m:.1e}" for e, m in near["l2_relative_mismatch"].items()))


if __name__ == "__main__":
    main()
