"""Why the midpoint methods keep orbits but not distances on the rotation field.

GIMP and SPHMP map each point to a point on its own latitude circle, but the
turning angle per step depends on the latitude. Two points on the same circle
keep their distance; a pair on different circles does not.
"""
import numpy as np

from riemstab.analysis import contractivity_sweep
from riemstab.config import bundled_fixtures, load_config
from riemstab.geometry import Sphere2
from riemstab.integrators import step


def turning_angle(method, field, y, h):
    z = step(method, field, y, h).point
    return np.arctan2(z[1], z[0]) - np.arctan2(y[1], y[0]), z[2] - y[2]


def main():
    cfg = load_config(bundled_fixtures()["fig4_midpoints"])
    field, x0, y0 = cfg.field, cfg.x0, cfg.y0
    S2 = Sphere2()
    same = S2.project([y0[0] * np.cos(1.0) - y0[1] * np.sin(1.0),
                       y0[0] * np.sin(1.0) + y0[1] * np.cos(1.0), y0[2]])
    print(f"{'method':>6} {'h':>6} {'angle(x0)':>10} {'angle(y0)':>10} {'dz':>9} "
          f"{'|dd| pair':>10} {'|dd| same lat':>13}")
    for method in ("GIMP", "SPHMP"):
        for h in (0.25, 0.5, 1.0, 1.5):
            ax, dzx = turning_angle(method, field, x0, h)
            ay, dzy = turning_angle(method, field, y0, h)
            pair = contractivity_sweep(method, field, x0, y0, [h])[0]
            lat = contractivity_sweep(method, field, y0, same, [h])[0]
            print(f"{method:>6} {h:6.2f} {ax:10.6f} {ay:10.6f} {max(abs(dzx), abs(dzy)):9.1e} "
                  f"{abs(pair.d_after - pair.d0):10.3e} {abs(lat.d_after - lat.d0):13.3e}")


if __name__ == "__main__":
    main()
