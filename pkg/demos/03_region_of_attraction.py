"""Coarse region-of-attraction map in reverse.

Each cell starts the vehicle on a straight reverse path with initial joint
errors (beta~1, beta~2); joint-angle constraints are removed so that only
physical folding or a timeout count as failure. A 7x7 grid keeps the run to
a few minutes on one core; the CLI runs the full grid:

    trailer-mpc sweep --config demos/configs/roa.cfg --parallel 8 --out roa
"""
import numpy as np

from trailer_mpc.harness import Scenario, SweepSpec, run_sweep


def main():
    spec = SweepSpec(cells=7, duration=60.0)
    res = run_sweep(Scenario(v0=-1.0), spec)
    print("rows: beta~2 from +0.8 (top) to -0.8; columns: beta~1 from -0.8 to +0.8; # converged")
    for kind in spec.controllers:
        grid = np.where(res.converged(kind), "#", ".")[::-1]
        print(f"\n{kind} ({int(res.converged(kind).sum())}/{grid.size})")
        for row in grid:
            print("  " + " ".join(row))
    print(f"\ncells converged for SS2T-MPC but not MS2T-MPC: {res.inclusion_exceptions('ms2t-mpc', 'ss2t-mpc')}")
    print(f"cells converged for LQ but not SS2T-MPC: {res.inclusion_exceptions('ss2t-mpc', 'lq')}")


if __name__ == "__main__":
    main()
