"""Speed along the beta grid: truncated lace series next to Monte Carlo.

Uses the delta=0.99, d1=5 two-valued configuration.  Run from the package
root:  python demos/speed_vs_beta.py [--steps 2e5] [--reps 20]
"""
import argparse
from pathlib import Path

from rwpre.environment import load_spec
from rwpre.lace import pi_table, speed_series
from rwpre.simulate import speed_estimate

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "two_valued.json"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=float, default=2e5)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--m-max", type=int, default=6)
    args = ap.parse_args()
    spec = load_spec(CONFIG)
    print(f"rho={spec.rho:.4f} eps_delta={spec.eps_delta:.4f}")
    print(" beta   series v1     mc v1      95% ci")
    for i in range(11):
        b = i / 10
        s = spec.with_beta(b)
        series = float(speed_series(s, pi_table(s, args.m_max, phi=False, bounds=False)).value[0])
        mc = speed_estimate(s, int(args.steps), args.reps, seed=1)
        print(f" {b:.1f}  {series:+.6f}  {mc.point[0]:+.6f}  {mc.ci_halfwidth[0]:.1e}")


if __name__ == "__main__":
    main()
