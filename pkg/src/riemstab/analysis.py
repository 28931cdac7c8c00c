"""Experiment procedures: contractivity sweeps, the GIE bifurcation study,
flow contraction, local/global error bounds and the Karcher mean."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, InvalidInputError, RiemstabError
from .fields import KarcherFieldSpec, VectorField, karcher_gradient_field
from .geometry import POINT_TOL, SPD, sym, sym_expm, sym_logm
from .integrators import (
    Method,
    SolverConfig,
    gie_step,
    integrate,
    reference_flow,
    reference_trajectory,
    step,
)

log = logging.getLogger(__name__)

_STEP_ERRORS = (RiemstabError, np.linalg.LinAlgError, FloatingPointError, OverflowError)


# --------------------------------------------------------------------------
# contractivity sweeps


@dataclass
class SweepRecord:
    method: str
    h: float
    d0: float
    d_after: Optional[float]
    converged_x: bool
    converged_y: bool
    iters_x: int = 0
    iters_y: int = 0

    @property
    def converged(self) -> bool:
        return self.converged_x and self.converged_y


def _try_step(method, field, y, h, cfg):
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            out = step(method, field, y, h, cfg)
    except _STEP_ERRORS as exc:
        log.debug("step %s h=%g failed: %s", method, h, exc)
        return None, 0
    iters = int(sum(out.iterations))
    return (out.point if out.converged else None), iters


def contractivity_sweep(method, field: VectorField, x0, y0, h_grid: Sequence[float],
                        cfg: SolverConfig = None) -> list[SweepRecord]:
    """Distance of the two one-step images of ``x0`` and ``y0`` for every ``h`` in ``h_grid``.

    A failed solve (or an explicit step that overflows) is recorded with
    ``d_after = None`` instead of aborting the sweep.
    """
    m = field.manifold
    method = Method.parse(method) if isinstance(method, str) else method
    d0 = m.dist(x0, y0)
    if d0 <= POINT_TOL:
        raise InvalidInputError("sweep needs two distinct initial points")
    if any(h <= 0 for h in h_grid) or list(h_grid) != sorted(h_grid):
        raise InvalidInputError("h_grid must be positive and ascending")
    records = []
    for h in h_grid:
        zx, ix = _try_step(method, field, x0, h, cfg)
        zy, iy = _try_step(method, field, y0, h, cfg)
        d_after = None
        if zx is not None and zy is not None:
            try:
                d_after = m.dist(zx, zy)
            except _STEP_ERRORS:
                zx = None
        records.append(SweepRecord(str(method), float(h), d0, d_after,
                                   zx is not None, zy is not None, ix, iy))
    return records


# --------------------------------------------------------------------------
# the scalar GIE equation on S^2 for the rotation field


def q_residual(z, h):
    """``q(z, h) = cos(h sqrt(1 - z^2)) z``: third component of ``exp_z(-h X|_z)``."""
    z = np.asarray(z, dtype=float)
    return np.cos(h * np.sqrt(np.clip(1.0 - z * z, 0.0, None))) * z


def enumerate_roots(z0: float, h: float, cells: int = 4096, xtol: float = 1e-13) -> list[float]:
    """All ``z`` in [-1, 1] with ``q(z, h) = z0``.

    Sign changes of ``q - z0`` on a uniform grid are refined by bisection.
    The zeros are simple, so a sign scan that resolves the oscillation of
    ``q`` finds every one of them.
    """
    if abs(z0) > 1:
        raise InvalidInputError("|z0| must be <= 1")
    grid = np.linspace(-1.0, 1.0, cells + 1)
    vals = q_residual(grid, h) - z0
    roots = [float(z) for z in grid[vals == 0.0]]
    sa, sb = np.sign(vals[:-1]), np.sign(vals[1:])
    for i in np.flatnonzero((sa * sb) < 0):
        a, b, fa = grid[i], grid[i + 1], vals[i]
        while b - a > xtol:
            mid = 0.5 * (a + b)
            fm = float(q_residual(mid, h)) - z0
            if fm == 0.0:
                a = b = mid
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
        roots.append(0.5 * (a + b))
    return sorted(roots)


@dataclass
class BifurcationDiagram:
    z0: float
    h_grid: list
    roots: list

    @property
    def counts(self) -> list[int]:
        return [len(r) for r in self.roots]


def bifurcation_diagram(z0: float, h_grid: Sequence[float], cells: int = 4096) -> BifurcationDiagram:
    h_grid = [float(h) for h in h_grid]
    return BifurcationDiagram(float(z0), h_grid, [enumerate_roots(z0, h, cells) for h in h_grid])


# --------------------------------------------------------------------------
# flow contraction and error bounds


@dataclass
class ContractionRow:
    t: float
    d: float
    bound: float
    violated: bool


def flow_contraction_check(field: VectorField, x0, y0, nu: float, t_grid: Sequence[float],
                           fine_tol: float = 1e-10) -> list[ContractionRow]:
    """Compare ``d(exp(tX)x0, exp(tX)y0)`` with ``d(x0, y0) e^{nu t}`` along ``t_grid``."""
    m = field.manifold
    d0 = m.dist(x0, y0)
    xs = reference_trajectory(field, x0, t_grid, fine_tol)
    ys = reference_trajectory(field, y0, t_grid, fine_tol)
    rows = []
    for t, a, b in zip(t_grid, xs, ys):
        d = m.dist(a, b)
        bound = d0 * np.exp(nu * t)
        rows.append(ContractionRow(float(t), d, float(bound), d > bound + 10 * fine_tol))
    return rows


def estimate_local_constant(method, field: VectorField, points, h_grid: Sequence[float],
                            p: int = None, fine_tol: float = 1e-12, cfg: SolverConfig = None) -> float:
    """``max d(exp(hX)y, phi_h(y)) / h^{p+1}`` over sample points and step sizes."""
    method = Method.parse(method) if isinstance(method, str) else method
    p = method.order if p is None else p
    m = field.manifold
    C = 0.0
    for y in points:
        for h in h_grid:
            exact = reference_flow(field, y, h, fine_tol)
            approx = step(method, field, y, h, cfg).point
            C = max(C, m.dist(exact, approx) / h ** (p + 1))
    return C


def global_error_bound(C: float, nu: float, p: int, t_star: float, h: float) -> float:
    """Upper bound on ``d(y(t*), y_k)`` from a local error bound ``C h^{p+1}``
    and monotonicity constant ``nu``."""
    if nu > 0:
        return C / nu * np.expm1(t_star * nu) * h ** p
    if nu == 0:
        return C * t_star * h ** p
    return C * np.exp(-nu * h) / nu * np.expm1(t_star * nu) * h ** p


@dataclass
class ErrorBoundReport:
    method: str
    nu: float
    C: float
    p: int
    t_star: float
    h_grid: list
    steps: list
    measured_errors: list
    bound_values: list
    order_estimate: float

    @property
    def bound_holds(self) -> bool:
        return all(e <= b for e, b in zip(self.measured_errors, self.bound_values))


def fit_order(h_grid, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    h = np.log(np.asarray(h_grid, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(h, e, 1)[0])


def global_error_study(method, field: VectorField, y0, t_star: float, h_grid: Sequence[float],
                       nu: float, C: float, p: int = None, fine_tol: float = 1e-12,
                       cfg: SolverConfig = None) -> ErrorBoundReport:
    """Measured global error at ``t_star`` versus the monotonicity-based bound, per step size."""
    method = Method.parse(method) if isinstance(method, str) else method
    p = method.order if p is None else p
    m = field.manifold
    exact = reference_flow(field, y0, t_star, fine_tol)
    ks, errs, bounds = [], [], []
    for h in h_grid:
        k = int(round(t_star / h))
        if k < 1 or abs(k * h - t_star) > 1e-12 * max(1.0, t_star):
            raise InvalidInputError(f"t_star={t_star} is not a multiple of h={h}")
        traj = integrate(method, field, y0, h, k, cfg)
        ks.append(k)
        errs.append(m.dist(exact, traj[-1]))
        bounds.append(global_error_bound(C, nu, p, t_star, h))
    positive = [(h, e) for h, e in zip(h_grid, errs) if e > 0]
    order = fit_order(*zip(*positive)) if len(positive) >= 2 else float("nan")
    return ErrorBoundReport(str(method), nu, C, p, t_star, [float(h) for h in h_grid],
                            ks, errs, bounds, order)


# --------------------------------------------------------------------------
# Karcher mean


def karcher_mean(spec: KarcherFieldSpec, tol: float = 1e-10, max_restarts: int = 200,
                 h: float = 1.0, cfg: SolverConfig = None) -> np.ndarray:
    """Karcher mean as the equilibrium of the gradient flow, reached by GIE steps.

    Starts from the log-Euclidean mean (which does not depend on the order
    of the targets) and steps until ``|X(A)|_g <= tol``.
    """
    field = karcher_gradient_field(spec)
    m = SPD(spec.n)
    w = np.asarray(spec.weights, dtype=float)
    A = sym_expm(sum(wi * sym_logm(Y) for wi, Y in zip(w, spec.targets)) / w.sum())
    for _ in range(max_restarts):
        if m.norm(A, field(A)) <= tol:
            return A
        out = gie_step(field, A, h, cfg)
        if not out.converged:
            raise ConvergenceError("GIE step failed while computing the Karcher mean")
        A = sym(out.point)
    if m.norm(A, field(A)) <= tol:
        return A
    raise ConvergenceError(f"Karcher mean not within {tol:g} after {max_restarts} steps")


# --------------------------------------------------------------------------
# constants for the global error bound


def region_chart(manifold, center):
    """A chart covering a neighbourhood of ``center``.

    On S^2 the spherical chart is rotated so that ``center`` sits on its
    equator, far from the coordinate singularities.
    """
    from .geometry import Sphere2, chart_bundle, rotation_to

    if isinstance(manifold, Sphere2):
        axis = manifold.tangent_basis(center)[0]
        R = rotation_to(axis)
        # put the centre at phi = 0 rather than near the phi = +-pi cut
        u = R.T @ center
        c, s = np.cos(np.arctan2(u[1], u[0])), np.sin(np.arctan2(u[1], u[0]))
        Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return chart_bundle(manifold, R @ Rz)
    return chart_bundle(manifold)


def estimate_bound_constants(method, field: VectorField, y0, t_star: float, h_grid,
                             n_samples: int = 200, seed: int = 0, margin: float = 0.5,
                             n_local_points: int = 6, fine_tol: float = 1e-12, cfg=None):
    """``(nu, C, radius)`` for the global error bound along the trajectory from ``y0``.

    ``nu`` is sampled over the geodesic ball about ``y0`` that contains the
    reference trajectory on ``[0, t_star]`` plus ``margin``; ``C`` is the
    largest local error ratio at points of that trajectory over ``h_grid``.
    """
    from .fields import estimate_nu, geodesic_ball_sampler

    m = field.manifold
    ts = np.linspace(0.0, t_star, 2 * n_local_points - 1)
    traj = reference_trajectory(field, y0, ts, fine_tol)
    radius = max(m.dist(y0, p) for p in traj) + margin
    chart = region_chart(m, y0)
    nu = estimate_nu(field, chart, geodesic_ball_sampler(m, chart, y0, radius), n_samples, seed).nu
    C = estimate_local_constant(method, field, traj[::2], h_grid, fine_tol=fine_tol, cfg=cfg)
    return nu, C, radius
