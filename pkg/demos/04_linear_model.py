"""The linearized error model around a straight path.

Prints the continuous matrices, checks that reversing is open-loop unstable
(the joint-angle modes of F have magnitude above one) and that the Riccati
feedback used as terminal cost stabilizes both directions.
"""
import numpy as np

from trailer_mpc.controller import MpcConfig, build_objective_map, build_stage_cost
from trailer_mpc.error_model import discretize, straight_path_matrices
from trailer_mpc.numcore import solve_dare
from trailer_mpc.vehicle import ms2t_config


def main():
    cfg = ms2t_config()
    mpc = MpcConfig()
    A, B = straight_path_matrices(cfg)
    with np.printoptions(precision=4, suppress=True):
        print("A =\n", A, "\nB =\n", B)
        Q, R = build_stage_cost(build_objective_map(cfg), mpc.q_bar, mpc.R)
        for direction in (1, -1):
            F, G = discretize(A, B, mpc.delta_s, direction)
            res = solve_dare(F, G, Q, R)
            open_loop = np.abs(np.linalg.eigvals(F))
            closed = np.abs(np.linalg.eigvals(F - G @ res.K))
            print(f"\ndirection {direction:+d}: |eig F| = {np.sort(open_loop)}, "
                  f"|eig(F - GK)| = {np.sort(closed)}")
            print("K =\n", res.K)


if __name__ == "__main__":
    main()
