"""Adjoint vs complex-step table at half resolution (initial-guess densities, beta = 4, p_E = p_U = 1).

    python3 scripts/verify_table.py [--out out/verify] [--elements 120,300,...]
"""
import argparse
import sys

from tofsi.cli import main as tofsi_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="out/verify")
    ap.add_argument("--elements", help="comma separated design element ids (default: 2 x 4 lattice)")
    ap.add_argument("--step", default="1e-10")
    args = ap.parse_args(argv)
    cmd = ["verify", "--set", "geometry.h=0.04", "--set", "solver.tol=1e-8", "--out", args.out, "--step", args.step]
    if args.elements:
        cmd += ["--elements", args.elements]
    return tofsi_main(cmd)


if __name__ == "__main__":
    sys.exit(main())
