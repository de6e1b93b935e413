"""Probe lower estimates of M_p / sqrt(p) on CE systems of several sizes."""
import argparse
import math

from sidonlab.sidon_solver import lambda_p_probe, psi2_probe
from sidonlab.systems import build_counterexample


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    ap.add_argument("--p", type=float, nargs="+", default=[2, 4, 8, 16, 32])
    ap.add_argument("--probes", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for n in args.n:
        s = build_counterexample(n).system()
        parts = []
        for p in args.p:
            r = lambda_p_probe(s, p, args.probes, args.seed)
            parts.append(f"p={p:g}:{r.mp_lower / math.sqrt(p):.3f}")
        c = psi2_probe(s, args.probes, args.seed)["psi2_lower"]
        print(f"n={n:3d} psi2>={c:.3f}  M_p/sqrt(p): " + " ".join(parts))


if __name__ == "__main__":
    main()
