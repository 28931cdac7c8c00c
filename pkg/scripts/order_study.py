"""Global error at t* = 1 on the SPD(2) Karcher problem against the monotonicity bound.

Prints one table per method: h, steps, measured error, bound, ratio.
"""
import numpy as np

from riemstab.analysis import estimate_bound_constants, global_error_study
from riemstab.config import bundled_fixtures, load_config

H_GRID = [1 / 10, 1 / 20, 1 / 40, 1 / 80, 1 / 160]


def main():
    cfg = load_config(bundled_fixtures()["fig2_spd"])
    for method in ("GIE", "GIMP"):
        nu, C, radius = estimate_bound_constants(method, cfg.field, cfg.x0, 1.0, H_GRID[:3])
        rep = global_error_study(method, cfg.field, cfg.x0, 1.0, H_GRID, nu, C)
        print(f"{method}: nu = {nu:.6f}, C = {C:.4f} (ball radius {radius:.3f}), "
              f"fitted order {rep.order_estimate:.4f}")
        print(f"  {'h':>8} {'k':>5} {'error':>12} {'bound':>12} {'bound/error':>12}")
        for h, k, e, b in zip(rep.h_grid, rep.steps, rep.measured_errors, rep.bound_values):
            print(f"  {h:8.5f} {k:5d} {e:12.4e} {b:12.4e} {b / e:12.2f}")
        print(f"  bound holds at every h: {rep.bound_holds}\n")


if __name__ == "__main__":
    np.set_printoptions(precision=6)
    main()
