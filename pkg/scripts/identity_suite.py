#!/usr/bin/env python3
"""Exact identity suite of the two normal-form generators for a range of lattice sizes."""
import argparse

from nlsquasi.analysis import identity_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("nsym", type=int, nargs="*", default=[1, 2, 3, 4, 5, 6])
    args = ap.parse_args()
    for n in args.nsym:
        rep = identity_report(n)
        counts = ", ".join(f"{k} {v}" for k, v in rep["counts"].items())
        print(f"N_sym={n}: {'PASS' if rep['pass'] else 'FAIL'} ({rep['seconds']:.2f}s)  {counts}")
        for key, ident in rep["identities"].items():
            if not ident["pass"]:
                print(f"    {ident['name']}: {ident['nonzero_terms']} terms, max {ident['max_residual']}")


if __name__ == "__main__":
    main()
