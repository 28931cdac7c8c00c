"""One-step methods on manifolds and the implicit-equation solver behind them.

Every implicit method is written as a residual ``r(z) = 0`` in ambient
coordinates and solved by Gauss-Newton over a local parametrization of the
unknown (finite-difference Jacobian, backtracking line search). The root
returned first is the *principal* one: Newton from the explicit predictor,
falling back to continuation in ``h`` when that fails.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import (
    AccuracyNotAttainedError,
    ConvergenceError,
    DegenerateInputError,
    InvalidInputError,
    RiemstabError,
)
from .fields import VectorField, with_isotropy_scale
from .geometry import SPD, Euclidean, Manifold, Sphere2, cross3

DISTINCT_ROOT_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-12
    max_iterations: int = 50
    strategy: str = "newton-with-fallback"
    predictor: str = "explicit-euler"
    multistart_grid: Optional[tuple] = None
    homotopy_steps: int = 8
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidInputError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.strategy not in ("newton", "fixed-point", "newton-with-fallback"):
            raise InvalidInputError(f"unknown solver strategy {self.strategy!r}")
        if self.predictor not in ("explicit-euler", "previous-point"):
            raise InvalidInputError(f"unknown predictor {self.predictor!r}")


@dataclass
class StepOutcome:
    solutions: list
    residuals: list
    iterations: list
    converged: bool
    midpoints: list = dc_field(default_factory=list)

    @property
    def point(self) -> np.ndarray:
        if not self.solutions:
            raise ConvergenceError("step did not converge")
        return self.solutions[0]

    @classmethod
    def failed(cls, iterations=0):
        return cls([], [], [iterations], False)


@dataclass(frozen=True)
class Method:
    name: str
    c: Optional[float] = None

    NAMES = ("GEE", "GIE", "GIMP", "SPHMP", "LIE_EULER_IMPLICIT")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise InvalidInputError(f"unknown method {self.name!r}")
        if self.name == "LIE_EULER_IMPLICIT" and self.c is None:
            raise InvalidInputError("LIE_EULER_IMPLICIT needs an isotropy parameter c")

    @classmethod
    def parse(cls, text: str) -> "Method":
        text = text.strip().upper()
        m = re.fullmatch(r"(LIE_EULER(?:_IMPLICIT)?)\(\s*([-+0-9.eE]+)\s*\)", text)
        if m:
            return cls("LIE_EULER_IMPLICIT", float(m.group(2)))
        return cls(text)

    @property
    def order(self) -> int:
        return 2 if self.name in ("GIMP", "SPHMP") else 1

    def __str__(self):
        if self.name == "LIE_EULER_IMPLICIT":
            return f"LIE_EULER_IMPLICIT({self.c:g})"
        return self.name


# --------------------------------------------------------------------------
# local parametrizations of the unknown


def _param(manifold: Manifold, ambient: bool):
    """Return ``(dim, retract, tangent_coords)`` for Gauss-Newton updates around ``z``."""
    if ambient or isinstance(manifold, Euclidean):
        size = int(np.prod(manifold.shape))
        return (size,
                lambda z, xi: z + xi.reshape(z.shape),
                lambda z, r: r.reshape(-1))
    if isinstance(manifold, Sphere2):
        def retract(z, xi):
            B = manifold.tangent_basis(z)
            w = z + xi[0] * B[0] + xi[1] * B[1]
            return w / np.linalg.norm(w)

        def coords(z, r):
            B = manifold.tangent_basis(z)
            return np.array([B[0] @ r, B[1] @ r])

        return 2, retract, coords
    if isinstance(manifold, SPD):
        n = manifold.n
        iu = np.triu_indices(n)

        def retract(z, xi):
            M = np.zeros((n, n))
            M[iu] = xi
            return z + M + np.triu(M, 1).T

        return len(iu[0]), retract, lambda z, r: r.reshape(n, n)[iu]
    raise InvalidInputError(f"no parametrization for {manifold!r}")


def _flat(manifold, r):
    if isinstance(manifold, SPD):
        return r[np.triu_indices(manifold.n)]
    return np.ravel(r)


def solve_residual(manifold: Manifold, residual: Callable, z0, cfg: SolverConfig, ambient=False):
    """Drive ``residual(z)`` (an ambient array) to zero starting from ``z0``.

    Returns ``(z, |r|, iterations, converged)``. Residual evaluations that
    leave the manifold's domain count as infinitely bad trial points.
    """
    dim, retract, coords = _param(manifold, ambient)

    def R(z):
        try:
            r = _flat(manifold, np.asarray(residual(z), dtype=float))
        except (RiemstabError, np.linalg.LinAlgError, FloatingPointError):
            return None
        return r if np.all(np.isfinite(r)) else None

    def jacobian(z, r):
        J = np.empty((r.size, dim))
        eps = cfg.fd_step
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = eps
            rp, rm = R(retract(z, e)), R(retract(z, -e))
            if rp is None or rm is None:
                return None
            J[:, i] = (rp - rm) / (2 * eps)
        return J

    z = np.asarray(z0, dtype=float)
    r = R(z)
    if r is None:
        return z, np.inf, 0, False
    rn = np.linalg.norm(r)
    if rn <= cfg.tolerance:
        return z, rn, 0, True
    J = None
    stalled = 0
    for it in range(1, cfg.max_iterations + 1):
        fresh = False
        if cfg.strategy == "fixed-point":
            delta = -coords(z, np.asarray(residual(z), dtype=float))
        else:
            if J is None:
                J = jacobian(z, r)
                fresh = True
                if J is None:
                    return z, rn, it, False
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            z_try = retract(z, t * delta)
            r_try = R(z_try)
            if r_try is not None and np.linalg.norm(r_try) < rn:
                break
            t *= 0.5
        else:
            if J is not None and not fresh:
                # stale Jacobian: rebuild once before giving up
                J = None
                continue
            return z, rn, it, False
        rn_new = np.linalg.norm(r_try)
        # a fresh Gauss-Newton step that barely helps means a nonzero local minimum
        stalled = stalled + 1 if fresh and rn_new > 0.9 * rn else 0
        if stalled >= 4:
            return z_try, rn_new, it, rn_new <= cfg.tolerance
        # keep the Jacobian only while it still contracts the residual well
        if t < 1.0 or rn_new > 0.05 * rn:
            J = None
        z, r, rn = z_try, r_try, rn_new
        if rn <= cfg.tolerance:
            return z, rn, it, True
    return z, rn, cfg.max_iterations, False


# --------------------------------------------------------------------------
# explicit pieces


def rodrigues(a, p) -> np.ndarray:
    """Action of the SO(3) exponential of ``a`` (axis-angle vector) on ``p``."""
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = np.linalg.norm(a)
    s = np.sinc(alpha / np.pi)
    c = 0.5 * np.sinc(alpha / (2 * np.pi)) ** 2
    ap = cross3(a, p)
    return p + s * ap + c * cross3(a, ap)


def _gee(field, y, h):
    m = field.manifold
    return m.exp(y, h * field(y))


def gee_step(field: VectorField, y, h: float, cfg: SolverConfig = None) -> StepOutcome:
    """Geodesic explicit Euler: ``exp_y(h X|_y)``."""
    z = _gee(field, field.manifold.check_point(y), h)
    return StepOutcome([z], [0.0], [0], True)


# --------------------------------------------------------------------------
# implicit methods


def _principal(manifold, make_residual, y, h, predictor, cfg, ambient=False):
    """Principal root of ``make_residual(h)``: Newton from the predictor, then h-continuation."""
    res = make_residual(h)
    z0 = y if cfg.predictor == "previous-point" else predictor(h)
    z, rn, it, ok = solve_residual(manifold, res, z0, cfg, ambient)
    if ok or cfg.strategy != "newton-with-fallback":
        return z, rn, it, ok
    total = it
    z = y
    k = cfg.homotopy_steps
    for i in range(1, k + 1):
        z, rn, it, ok = solve_residual(manifold, make_residual(h * i / k), z, cfg, ambient)
        total += it
        if not ok:
            return z, rn, total, False
    return z, rn, total, True


def _sphere_seeds(y, n_z=64, n_phi=8):
    phi0 = np.arctan2(y[1], y[0])
    seeds = []
    for z3 in np.linspace(-1.0, 1.0, n_z):
        r = np.sqrt(max(0.0, 1.0 - z3 * z3))
        for k in range(n_phi):
            phi = phi0 + 2 * np.pi * k / n_phi
            seeds.append(np.array([r * np.cos(phi), r * np.sin(phi), z3]))
    return seeds


def _with_multistart(outcome, manifold, residual, seeds, cfg, ambient=False, finish=None):
    sols = list(outcome.solutions)
    for s in seeds:
        z, rn, it, ok = solve_residual(manifold, residual, s, cfg, ambient)
        if not ok:
            continue
        if finish is not None:
            z = finish(z)
        if all(manifold.dist(z, w) >= DISTINCT_ROOT_TOL for w in sols):
            sols.append(z)
            outcome.residuals.append(rn)
            outcome.iterations.append(it)
    outcome.solutions = sols
    outcome.converged = bool(sols)
    return outcome


def gie_residual(field: VectorField, y, h):
    m = field.manifold
    return lambda z: m.exp(z, -h * field(z)) - y


def gie_step(field: VectorField, y, h: float, cfg: SolverConfig = None,
             multistart: bool = False) -> StepOutcome:
    """Geodesic implicit Euler: find ``z`` with ``exp_z(-h X|_z) = y``.

    With ``multistart`` the principal root is followed by every other distinct
    root reached from ``cfg.multistart_grid`` (default on S^2: a grid of 64
    third components times 8 azimuths).
    """
    cfg = cfg or SolverConfig()
    m = field.manifold
    y = m.check_point(y)
    z, rn, it, ok = _principal(m, lambda hh: gie_residual(field, y, hh), y, h,
                               lambda hh: _gee(field, y, hh), cfg)
    out = StepOutcome([m.project(z)], [rn], [it], True) if ok else StepOutcome.failed(it)
    if multistart:
        seeds = cfg.multistart_grid
        if seeds is None:
            if not isinstance(m, Sphere2):
                raise InvalidInputError("default multistart grid exists only for sphere2")
            seeds = _sphere_seeds(y)
        out = _with_multistart(out, m, gie_residual(field, y, h), seeds, cfg, finish=m.project)
    return out


def gimp_step(field: VectorField, y, h: float, cfg: SolverConfig = None) -> StepOutcome:
    """Geodesic implicit midpoint.

    Solves ``exp_m(-h/2 X|_m) = y`` for the midpoint ``m`` (a GIE step of size
    h/2) and returns ``exp_m(h/2 X|_m)``; ``midpoints`` records ``m``.
    """
    cfg = cfg or SolverConfig()
    m = field.manifold
    half = gie_step(field, y, 0.5 * h, cfg)
    if not half.converged:
        return half
    mid = half.point
    z = m.exp(mid, 0.5 * h * field(mid))
    return StepOutcome([z], half.residuals, half.iterations, True, midpoints=[mid])


def sphmp_step(field: VectorField, y, h: float, cfg: SolverConfig = None) -> StepOutcome:
    """Spherical midpoint: ``z = y + h X((y + z)/|y + z|)`` on S^2."""
    cfg = cfg or SolverConfig()
    m = field.manifold
    if not isinstance(m, Sphere2):
        raise InvalidInputError("SPHMP is defined on sphere2 only")
    y = m.check_point(y)

    def make(hh):
        def res(z):
            s = y + z
            ns = np.linalg.norm(s)
            if ns < 1e-8:
                raise DegenerateInputError("midpoint y + z is (nearly) zero")
            return z - y - hh * field(s / ns)
        return res

    def predictor(hh):
        return y + hh * field(y)

    z, rn, it, ok = _principal(m, make, y, h, predictor, cfg, ambient=True)
    if not ok:
        if np.linalg.norm(y + z) < 1e-6:
            raise DegenerateInputError("SPHMP midpoint degenerated (y + z ~ 0)")
        return StepOutcome.failed(it)
    if abs(np.linalg.norm(z) - 1.0) > 1e-8:
        raise InvalidInputError(f"SPHMP left the sphere (|z| = {np.linalg.norm(z)!r}); field not tangent?")
    return StepOutcome([m.project(z)], [rn], [it], True)


def lie_euler_residual(field: VectorField, y, h):
    return lambda z: rodrigues(h * field.isotropy(z), y) - z


def lie_euler_implicit_step(field: VectorField, y, h: float, cfg: SolverConfig = None) -> StepOutcome:
    """Implicit Lie-Euler on S^2 = SO(3)/SO(2): ``z = exp(h a(z)) y``."""
    cfg = cfg or SolverConfig()
    m = field.manifold
    if not isinstance(m, Sphere2) or field.isotropy is None:
        raise InvalidInputError("implicit Lie-Euler needs a sphere2 field with an isotropy map")
    y = m.check_point(y)
    z, rn, it, ok = _principal(m, lambda hh: lie_euler_residual(field, y, hh), y, h,
                               lambda hh: rodrigues(hh * field.isotropy(y), y), cfg)
    if not ok:
        return StepOutcome.failed(it)
    return StepOutcome([m.project(z)], [rn], [it], True)


def step(method: Method | str, field: VectorField, y, h: float, cfg: SolverConfig = None) -> StepOutcome:
    if isinstance(method, str):
        method = Method.parse(method)
    if method.name == "GEE":
        return gee_step(field, y, h, cfg)
    if method.name == "GIE":
        return gie_step(field, y, h, cfg)
    if method.name == "GIMP":
        return gimp_step(field, y, h, cfg)
    if method.name == "SPHMP":
        return sphmp_step(field, y, h, cfg)
    return lie_euler_implicit_step(with_isotropy_scale(field, method.c), y, h, cfg)


class IntegrationError(ConvergenceError):
    def __init__(self, msg, step_index, trajectory):
        super().__init__(f"step {step_index}: {msg}")
        self.step_index = step_index
        self.trajectory = trajectory


def integrate(method, field: VectorField, y0, h: float, n_steps: int,
              cfg: SolverConfig = None) -> list:
    """Apply ``n_steps`` steps of ``method``; returns the ``n_steps + 1`` points."""
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    traj = [field.manifold.check_point(y0)]
    for j in range(n_steps):
        out = step(method, field, traj[-1], h, cfg)
        if not out.converged:
            raise IntegrationError("solver did not converge", j, traj)
        traj.append(out.point)
    return traj


# --------------------------------------------------------------------------
# reference flow


def _gimp_compose(field, y0, t, n, cfg):
    y = y0
    h = t / n
    for _ in range(n):
        out = gimp_step(field, y, h, cfg)
        if not out.converged:
            raise ConvergenceError("GIMP substep did not converge in the reference flow")
        y = out.point
    return y


def _extrapolate(m, levels, ratio=2.0):
    """Polynomial extrapolation to h -> 0 of results computed with steps h, h/2, h/4, ...

    GIMP is symmetric, so its error expands in even powers of h. The table
    is built in normal coordinates at the finest result.
    """
    base = levels[-1]
    T = [m.log(base, y) for y in levels]
    for i in range(1, len(T)):
        f = ratio ** (2 * i) - 1.0
        T = [T[j] + (T[j] - T[j - 1]) / f for j in range(1, len(T))]
    return m.exp(base, T[-1])


def reference_flow(field: VectorField, y0, t_end: float, fine_tol: float = 1e-10,
                   h0: float = 0.1, max_halvings: int = 12, depth: int = 4) -> np.ndarray:
    """High-accuracy approximation of ``exp(t_end X) y0``.

    Composes GIMP substeps, halving the substep and extrapolating the last
    ``depth`` levels, until two consecutive extrapolated results differ by
    less than ``fine_tol`` in distance.
    """
    if t_end < 0:
        raise InvalidInputError("t_end must be >= 0")
    m = field.manifold
    y0 = m.check_point(y0)
    if t_end == 0:
        return y0
    scale = max(1.0, float(np.max(np.abs(y0))))
    cfg = SolverConfig(tolerance=max(min(1e-13, fine_tol * 1e-2), 1e-14 * scale), max_iterations=60)
    n = max(1, int(np.ceil(t_end / h0)))
    levels = [_gimp_compose(field, y0, t_end, n, cfg)]
    prev = None
    for _ in range(max_halvings):
        n *= 2
        levels.append(_gimp_compose(field, y0, t_end, n, cfg))
        levels = levels[-depth:]
        ext = _extrapolate(m, levels)
        if prev is not None and m.dist(ext, prev) < fine_tol:
            return ext
        prev = ext
    raise AccuracyNotAttainedError(f"reference flow did not reach {fine_tol:g} after {max_halvings} halvings")


def reference_trajectory(field: VectorField, y0, t_grid, fine_tol: float = 1e-10) -> list:
    """Reference solution at every time in the increasing ``t_grid`` (segment by segment)."""
    pts = []
    y, t_prev = field.manifold.check_point(y0), 0.0
    for t in t_grid:
        if t < t_prev:
            raise InvalidInputError("t_grid must be non-decreasing and start at >= 0")
        y = reference_flow(field, y, t - t_prev, fine_tol) if t > t_prev else y
        pts.append(y)
        t_prev = t
    return pts
