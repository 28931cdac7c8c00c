"""Vector fields, the logarithmic g-norm of their covariant derivative, and Killing checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .geometry import (
    SPD,
    ChartBundle,
    Euclidean,
    Manifold,
    Sphere2,
    _sqrt_pair,
    cross3,
    sym,
    sym_logm,
)

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class VectorField:
    """A tangent vector field ``X`` on ``manifold``.

    ``isotropy`` is an optional map ``a: S^2 -> R^3`` with ``X(y) = a(y) x y``
    (sphere only), used by the implicit Lie-Euler method. ``chart_components``
    and ``chart_partials`` optionally supply ``X^i(x)`` and ``dX^k/dx^i`` for a
    specific chart; when absent they are derived from ``func``.
    """

    manifold: Manifold
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "field"
    isotropy: Optional[Callable[[np.ndarray], np.ndarray]] = None
    chart_components: Optional[Callable[[np.ndarray], np.ndarray]] = None
    chart_partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = dc_field(default_factory=dict)

    def __call__(self, p) -> np.ndarray:
        return self.func(np.asarray(p, dtype=float))

    def components(self, chart: ChartBundle, x) -> np.ndarray:
        if self.chart_components is not None:
            return np.asarray(self.chart_components(x), dtype=float)
        return chart.tangent_to_chart(x, self(chart.from_chart(x)))


def zero_field(manifold: Manifold) -> VectorField:
    iso = (lambda y: np.zeros(3)) if isinstance(manifold, Sphere2) else None
    return VectorField(manifold, lambda p: np.zeros(manifold.shape), "zero", isotropy=iso)


def killing_rotation_field(c: float = 1.0) -> VectorField:
    """``X(y) = e3 x y`` on S^2: rigid rotation about the z-axis.

    The attached isotropy map is ``a(y) = e3 + (c - 1) y3 y``; the default
    ``c = 1`` gives the constant generator ``e3``.
    """
    return VectorField(
        Sphere2(),
        lambda y: cross3(E3, y),
        name="killing" if c == 1.0 else f"isotropy(c={c:g})",
        isotropy=lambda y: E3 + (c - 1.0) * y[2] * y,
        params={"c": c},
    )


def isotropy_field(c: float) -> VectorField:
    """Rotation field with isotropy parameter ``c``; the field itself does not depend on ``c``."""
    return killing_rotation_field(c)


def linear_field(A) -> VectorField:
    """``X(y) = A y`` on Euclidean space, with exact chart partials."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    return VectorField(
        Euclidean(n),
        lambda y: A @ y,
        name="linear",
        chart_components=lambda x: A @ np.asarray(x, dtype=float),
        chart_partials=lambda x: A.copy(),
        params={"A": A.tolist()},
    )


@dataclass(frozen=True)
class KarcherFieldSpec:
    targets: tuple
    weights: Optional[tuple] = None

    def __post_init__(self):
        if len(self.targets) < 1:
            raise InvalidInputError("Karcher field needs at least one target")
        n = np.asarray(self.targets[0]).shape[0]
        m = SPD(n)
        object.__setattr__(self, "targets", tuple(m.check_point(np.asarray(Y, float)) for Y in self.targets))
        if self.weights is None:
            object.__setattr__(self, "weights", tuple(1.0 for _ in self.targets))
        elif len(self.weights) != len(self.targets):
            raise InvalidInputError("one weight per Karcher target is required")

    @property
    def n(self) -> int:
        return self.targets[0].shape[0]


def karcher_gradient_field(spec: KarcherFieldSpec) -> VectorField:
    """Negative Riemannian gradient of ``1/2 sum_j w_j d^2(A, Y_j)`` on SPD(n).

    ``X(A) = sum_j w_j A^{1/2} log(A^{-1/2} Y_j A^{-1/2}) A^{1/2}``. Weights default to 1.
    """
    m = SPD(spec.n)

    def func(A):
        if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
            raise InvalidInputError("Karcher field evaluated at a non-symmetric matrix")
        s, si = _sqrt_pair(A)
        L = sum(w * sym_logm(sym(si @ Y @ si)) for w, Y in zip(spec.weights, spec.targets))
        return sym(s @ L @ s)

    return VectorField(m, func, name="karcher",
                       params={"targets": [Y.tolist() for Y in spec.targets],
                               "weights": list(spec.weights)})


# --------------------------------------------------------------------------
# logarithmic norm


def _fd_step(x):
    return max(1e-6, 1e-6 * float(np.linalg.norm(x)))


def covariant_matrix(field: VectorField, chart: ChartBundle, x) -> np.ndarray:
    """Matrix of ``v -> nabla_v X`` in chart coordinates: ``dX^k/dx^i + Gamma^k_ij X^j``.

    Partial derivatives come from ``field.chart_partials`` when given, else
    central differences.
    """
    x = np.asarray(x, dtype=float)
    X = field.components(chart, x)
    if field.chart_partials is not None:
        D = np.asarray(field.chart_partials(x), dtype=float)
    else:
        h = _fd_step(x)
        D = np.empty((chart.dim, chart.dim))
        for i in range(chart.dim):
            e = np.zeros(chart.dim)
            e[i] = h
            D[:, i] = (field.components(chart, x + e) - field.components(chart, x - e)) / (2 * h)
    G = chart.christoffel(x)
    return D + np.einsum("kij,j->ki", G, X)


def log_norm_at(field: VectorField, chart: ChartBundle, x) -> float:
    """``mu_g(nabla X)`` at chart point ``x``: ``sup_v g(Av, v) / g(v, v)``.

    Evaluated as the largest eigenvalue of the symmetric part of
    ``g^{1/2} A g^{-1/2}``.
    """
    A = covariant_matrix(field, chart, x)
    g = chart.metric_matrix(x)
    w, Q = np.linalg.eigh(g)
    if w[0] <= 0:
        raise np.linalg.LinAlgError("metric matrix is not positive definite")
    gh = (Q * np.sqrt(w)) @ Q.T
    gih = (Q / np.sqrt(w)) @ Q.T
    B = gh @ A @ gih
    return float(np.linalg.eigvalsh(0.5 * (B + B.T))[-1])


def killing_defect(field: VectorField, chart: ChartBundle, x, pairs=None) -> float:
    """``max |<A Y, Z>_g + <A Z, Y>_g|`` over trial pairs of coordinate vectors.

    By default the pairs run over a g-orthonormal frame at ``x``. Zero means the
    field is Killing at ``x``.
    """
    A = covariant_matrix(field, chart, x)
    g = chart.metric_matrix(x)
    if pairs is None:
        w, Q = np.linalg.eigh(g)
        frame = list((Q / np.sqrt(w)).T)
        pairs = [(Y, Z) for Y in frame for Z in frame]
    worst = 0.0
    for Y, Z in pairs:
        Y = np.asarray(Y, float)
        Z = np.asarray(Z, float)
        worst = max(worst, abs((A @ Y) @ g @ Z + (A @ Z) @ g @ Y))
    return float(worst)


@dataclass
class MonotonicityEstimate:
    nu: float
    samples: list
    region: str = ""

    def merged(self, other: "MonotonicityEstimate") -> "MonotonicityEstimate":
        samples = self.samples + other.samples
        return MonotonicityEstimate(max(self.nu, other.nu), samples, self.region)


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def box_sampler(lo, hi) -> Sampler:
    """Uniform samples in a coordinate box of the chart."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def sample(rng, n):
        return lo + (hi - lo) * rng.random((n, lo.size))

    sample.description = f"box {lo.tolist()}..{hi.tolist()}"
    return sample


def geodesic_ball_sampler(manifold: Manifold, chart: ChartBundle, center, radius: float) -> Sampler:
    """Uniform-in-radius-volume samples of the geodesic ball, returned in chart coordinates.

    Each sample consumes one row of ``dim + 1`` normals, so a larger draw with
    the same seed extends a smaller one.
    """
    center = manifold.check_point(center)
    basis = manifold.tangent_basis(center)
    d = len(basis)

    def sample(rng, n):
        raw = rng.standard_normal((n, d + 1))
        out = []
        for row in raw:
            c = row[:d] / np.linalg.norm(row[:d])
            u = 0.5 * (1.0 + math.erf(row[d] / math.sqrt(2.0)))
            r = radius * u ** (1.0 / d)
            v = sum(ci * bi for ci, bi in zip(c, basis))
            out.append(chart.to_chart(manifold.exp(center, r * v)))
        return np.array(out)

    sample.description = f"geodesic ball radius {radius:g}"
    return sample


def estimate_nu(field: VectorField, chart: ChartBundle, sampler: Sampler = None,
                n_samples: int = 200, seed: int = 0, points=None) -> MonotonicityEstimate:
    """Sampled estimate of the monotonicity constant ``sup_x mu_g(nabla X|_x)``.

    Either pass a ``sampler`` (deterministic given ``seed``) or explicit chart ``points``.
    """
    if points is None:
        if sampler is None or n_samples < 1:
            raise InvalidInputError("estimate_nu needs a sampler and n_samples >= 1, or points")
        points = sampler(np.random.default_rng(seed), n_samples)
    points = [np.asarray(x, dtype=float) for x in points]
    if not points:
        raise InvalidInputError("empty sample set")
    samples = [(x, log_norm_at(field, chart, x)) for x in points]
    nu = max(mu for _, mu in samples)
    return MonotonicityEstimate(nu, samples, getattr(sampler, "description", "points"))


def with_isotropy_scale(field: VectorField, c: float) -> VectorField:
    """Same field, generator ``a_perp(y) + c (a(y).y) y``.

    ``a_perp`` is the part of the field's isotropy map orthogonal to ``y``. For
    the rotation field this is ``e3 + (c - 1) y3 y``; the field values are
    unchanged, only the Lie-Euler discretization sees ``c``.
    """
    if field.isotropy is None:
        raise InvalidInputError("field has no isotropy map")
    base = field.isotropy

    def iso(y):
        a = base(y)
        along = float(a @ y)
        return a - along * y + c * along * y

    return VectorField(field.manifold, field.func, field.name, isotropy=iso,
                       chart_components=field.chart_components,
                       chart_partials=field.chart_partials, params={**field.params, "c": c})
