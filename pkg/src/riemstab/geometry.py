"""Manifolds used by the integrators: the 2-sphere, SPD matrices, Euclidean space.

Points and tangent vectors are plain numpy arrays; the manifold object they are
passed to acts as their type tag. The sphere is embedded in R^3 and tangent
vectors at ``p`` are ambient 3-vectors orthogonal to ``p``. SPD points are
symmetric n x n matrices and tangent vectors are symmetric matrices, with the
affine-invariant metric ``g_A(U, V) = tr(A^-1 U A^-1 V)``.

Coordinate charts (:class:`ChartBundle`) are only needed by the analysis code
that works with Christoffel symbols.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import (
    ChartDomainError,
    DegenerateInputError,
    InvalidInputError,
    NoUniqueGeodesicError,
)

POINT_TOL = 1e-12
TANGENT_TOL = 1e-10
SPD_FLOOR = 1e-12

Kind = Literal["sphere2", "spd", "euclidean"]


@dataclass(frozen=True)
class ManifoldDescriptor:
    kind: Kind
    n: int = 2
    """Ambient size: 3 for sphere2, matrix size for spd, dimension for euclidean."""

    def __post_init__(self):
        if self.kind not in ("sphere2", "spd", "euclidean"):
            raise InvalidInputError(f"unknown manifold kind {self.kind!r}")
        if self.n < 1:
            raise InvalidInputError("manifold size must be >= 1")

    @property
    def dimension(self) -> int:
        if self.kind == "sphere2":
            return 2
        if self.kind == "spd":
            return self.n * (self.n + 1) // 2
        return self.n

    @property
    def curvature_sign(self) -> str:
        return {"sphere2": "positive", "spd": "negative-or-zero", "euclidean": "zero"}[self.kind]

    def __str__(self):
        return "sphere2" if self.kind == "sphere2" else f"{self.kind}({self.n})"


# --------------------------------------------------------------------------
# symmetric matrix functions


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (much cheaper than ``np.cross`` for single pairs)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def sym_fn(A: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its eigendecomposition."""
    w, Q = np.linalg.eigh(A)
    return sym((Q * fn(w)) @ Q.T)


def sym_expm(A):
    return sym_fn(A, np.exp)


def sym_logm(A):
    return sym_fn(A, np.log)


def sym_sqrtm(A):
    return sym_fn(A, np.sqrt)


def _sqrt_pair(A):
    w, Q = np.linalg.eigh(A)
    if w[0] <= 0:
        raise InvalidInputError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    s = np.sqrt(w)
    return sym((Q * s) @ Q.T), sym((Q / s) @ Q.T)


# --------------------------------------------------------------------------
# manifolds


class Manifold:
    """Common interface. Subclasses implement the closed-form geometry."""

    descriptor: ManifoldDescriptor
    shape: tuple

    @property
    def dim(self) -> int:
        return self.descriptor.dimension

    def check_point(self, p) -> np.ndarray:
        raise NotImplementedError

    def check_tangent(self, p, v) -> np.ndarray:
        raise NotImplementedError

    def exp(self, p, v) -> np.ndarray:
        raise NotImplementedError

    def log(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def dist(self, p, q) -> float:
        raise NotImplementedError

    def inner(self, p, u, v) -> float:
        raise NotImplementedError

    def norm(self, p, v) -> float:
        return float(np.sqrt(max(self.inner(p, v, v), 0.0)))

    def project(self, raw) -> np.ndarray:
        raise NotImplementedError

    def tangent_basis(self, p) -> list[np.ndarray]:
        """Orthonormal basis of the tangent space at ``p``."""
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        raise NotImplementedError

    def random_tangent(self, p, rng: np.random.Generator) -> np.ndarray:
        """Tangent vector at ``p`` with standard normal coefficients in an orthonormal basis."""
        basis = self.tangent_basis(p)
        c = rng.standard_normal(len(basis))
        return sum(ci * bi for ci, bi in zip(c, basis))

    def zero_tangent(self, p) -> np.ndarray:
        return np.zeros(self.shape)

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor})"


class Sphere2(Manifold):
    def __init__(self):
        self.descriptor = ManifoldDescriptor("sphere2", 3)
        self.shape = (3,)

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (3,):
            raise InvalidInputError(f"sphere point must be a 3-vector, got shape {p.shape}")
        if abs(np.linalg.norm(p) - 1.0) > POINT_TOL:
            raise InvalidInputError(f"point not on the unit sphere (|p| = {np.linalg.norm(p)!r})")
        return p

    def check_tangent(self, p, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (3,):
            raise InvalidInputError(f"sphere tangent must be a 3-vector, got shape {v.shape}")
        if abs(np.dot(p, v)) > TANGENT_TOL * max(1.0, np.linalg.norm(v)):
            raise InvalidInputError("vector is not tangent to the sphere at the base point")
        return v

    def exp(self, p, v):
        p = self.check_point(p)
        v = self.check_tangent(p, v)
        a = np.linalg.norm(v)
        # np.sinc(x) = sin(pi x)/(pi x)
        q = np.cos(a) * p + np.sinc(a / np.pi) * v
        return q / np.linalg.norm(q)

    def log(self, p, q):
        p = self.check_point(p)
        q = self.check_point(q)
        c = float(np.dot(p, q))
        w = q - c * p
        s = np.linalg.norm(w)
        if c < 0 and np.linalg.norm(p + q) < 1e-10:
            raise NoUniqueGeodesicError("antipodal points have no unique minimizing geodesic")
        theta = np.arctan2(s, c)
        if s == 0.0:
            return np.zeros(3)
        return (theta / s) * w

    def dist(self, p, q):
        p = self.check_point(p)
        q = self.check_point(q)
        return float(np.arctan2(np.linalg.norm(cross3(p, q)), np.dot(p, q)))

    def inner(self, p, u, v):
        return float(np.dot(u, v))

    def project(self, raw):
        raw = np.asarray(raw, dtype=float)
        r = np.linalg.norm(raw)
        if r < 1e-300:
            raise DegenerateInputError("cannot project the zero vector onto the sphere")
        return raw / r

    def tangent_basis(self, p):
        p = np.asarray(p, dtype=float)
        # pick the coordinate axis least aligned with p
        e = np.zeros(3)
        e[np.argmin(np.abs(p))] = 1.0
        b1 = e - np.dot(e, p) * p
        b1 /= np.linalg.norm(b1)
        b2 = cross3(p, b1)
        return [b1, b2]

    def random_point(self, rng, scale=1.0):
        return self.project(rng.standard_normal(3))


class SPD(Manifold):
    """Symmetric positive definite n x n matrices with the affine-invariant metric."""

    def __init__(self, n: int = 2):
        self.n = n
        self.descriptor = ManifoldDescriptor("spd", n)
        self.shape = (n, n)

    def check_point(self, p):
        A = np.asarray(p, dtype=float)
        if A.shape != self.shape:
            raise InvalidInputError(f"SPD point must have shape {self.shape}, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("SPD point has non-finite entries")
        if np.max(np.abs(A - A.T)) > POINT_TOL * max(1.0, np.max(np.abs(A))):
            raise InvalidInputError("matrix is not symmetric")
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise InvalidInputError("matrix is not positive definite")
        return A

    def check_tangent(self, p, v):
        V = np.asarray(v, dtype=float)
        if V.shape != self.shape:
            raise InvalidInputError(f"SPD tangent must have shape {self.shape}, got {V.shape}")
        if np.max(np.abs(V - V.T)) > POINT_TOL * max(1.0, np.max(np.abs(V))):
            raise InvalidInputError("tangent matrix is not symmetric")
        return V

    def exp(self, p, v):
        A = np.asarray(p, dtype=float)
        V = self.check_tangent(A, v)
        if np.max(np.abs(A - A.T)) > POINT_TOL * max(1.0, np.max(np.abs(A))):
            raise InvalidInputError("matrix is not symmetric")
        if not V.any():
            return self.check_point(A).copy()
        s, si = _sqrt_pair(A)
        return sym(s @ sym_expm(sym(si @ V @ si)) @ s)

    def log(self, p, q):
        A = self.check_point(p)
        B = self.check_point(q)
        s, si = _sqrt_pair(A)
        return sym(s @ sym_logm(sym(si @ B @ si)) @ s)

    def dist(self, p, q):
        A = self.check_point(p)
        B = self.check_point(q)
        _, si = _sqrt_pair(A)
        lam = np.linalg.eigvalsh(sym(si @ B @ si))
        return float(np.sqrt(np.sum(np.log(lam) ** 2)))

    def inner(self, p, u, v):
        A = np.asarray(p, dtype=float)
        Ai_U = np.linalg.solve(A, u)
        Ai_V = np.linalg.solve(A, v)
        return float(np.trace(Ai_U @ Ai_V))

    def project(self, raw):
        M = np.asarray(raw, dtype=float).reshape(self.shape)
        return sym_fn(sym(M), lambda w: np.maximum(w, SPD_FLOOR))

    def tangent_basis(self, p):
        # E orthonormal in the Frobenius sense, mapped by A^{1/2} E A^{1/2}
        s, _ = _sqrt_pair(np.asarray(p, dtype=float))
        basis = []
        for i in range(self.n):
            for j in range(i, self.n):
                E = np.zeros(self.shape)
                if i == j:
                    E[i, i] = 1.0
                else:
                    E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
                basis.append(sym(s @ E @ s))
        return basis

    def random_point(self, rng, scale=1.0):
        """``exp_I`` of a random symmetric matrix, i.e. a point at distance ~``scale`` from I."""
        V = sym(rng.standard_normal(self.shape))
        V *= scale / max(np.linalg.norm(V), 1e-300)
        return sym_expm(V)


class Euclidean(Manifold):
    """R^n; a calibration case where the classical formulas must be recovered."""

    def __init__(self, n: int = 2):
        self.n = n
        self.descriptor = ManifoldDescriptor("euclidean", n)
        self.shape = (n,)

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != self.shape:
            raise InvalidInputError(f"point must have shape {self.shape}, got {p.shape}")
        return p

    def check_tangent(self, p, v):
        return self.check_point(v)

    def exp(self, p, v):
        return self.check_point(p) + self.check_tangent(p, v)

    def log(self, p, q):
        return self.check_point(q) - self.check_point(p)

    def dist(self, p, q):
        return float(np.linalg.norm(self.log(p, q)))

    def inner(self, p, u, v):
        return float(np.dot(u, v))

    def project(self, raw):
        return np.asarray(raw, dtype=float).reshape(self.shape)

    def tangent_basis(self, p):
        return list(np.eye(self.n))

    def random_point(self, rng, scale=1.0):
        return scale * rng.standard_normal(self.n)


def make_manifold(desc: ManifoldDescriptor | str) -> Manifold:
    """Build a manifold from a descriptor or a string like ``"spd(2)"``."""
    if isinstance(desc, str):
        desc = parse_descriptor(desc)
    if desc.kind == "sphere2":
        return Sphere2()
    if desc.kind == "spd":
        return SPD(desc.n)
    return Euclidean(desc.n)


def parse_descriptor(text: str) -> ManifoldDescriptor:
    text = text.strip().lower()
    if text in ("sphere2", "s2"):
        return ManifoldDescriptor("sphere2", 3)
    for kind in ("spd", "euclidean"):
        if text.startswith(kind + "(") and text.endswith(")"):
            try:
                n = int(text[len(kind) + 1 : -1])
            except ValueError:
                break
            return ManifoldDescriptor(kind, n)
    raise InvalidInputError(f"cannot parse manifold descriptor {text!r}")


# --------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class ChartBundle:
    """Local coordinates for analysis.

    ``tangent_to_chart(x, v)`` gives the coordinate components of an ambient
    tangent vector ``v`` at ``from_chart(x)``; ``tangent_from_chart`` is the
    pushforward. ``christoffel(x)[k, i, j]`` is Gamma^k_ij.
    """

    dim: int
    to_chart: Callable[[np.ndarray], np.ndarray]
    from_chart: Callable[[np.ndarray], np.ndarray]
    metric_matrix: Callable[[np.ndarray], np.ndarray]
    christoffel: Callable[[np.ndarray], np.ndarray]
    tangent_to_chart: Callable[[np.ndarray, np.ndarray], np.ndarray]
    tangent_from_chart: Callable[[np.ndarray, np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], bool]

    def inner(self, x, a, b) -> float:
        return float(np.asarray(a) @ self.metric_matrix(x) @ np.asarray(b))


def chart_bundle(m: ManifoldDescriptor | Manifold, rotation=None) -> ChartBundle:
    """Coordinate chart for a manifold.

    sphere2 uses spherical coordinates (theta, phi) about the axis ``rotation @ e3``
    (``rotation`` defaults to the identity), valid away from the two poles and
    for phi in (-pi, pi). spd uses the upper-triangular matrix entries.
    euclidean uses the identity chart.
    """
    if isinstance(m, Manifold):
        m = m.descriptor
    if m.kind == "sphere2":
        return _sphere_chart(np.eye(3) if rotation is None else np.asarray(rotation, float))
    if m.kind == "spd":
        return _spd_chart(m.n)
    return _euclidean_chart(m.n)


def _euclidean_chart(n):
    def check(x):
        x = np.asarray(x, dtype=float)
        if x.shape != (n,):
            raise ChartDomainError(f"expected {n} coordinates")
        return x

    return ChartBundle(
        dim=n,
        to_chart=lambda p: check(p).copy(),
        from_chart=lambda x: check(x).copy(),
        metric_matrix=lambda x: np.eye(n),
        christoffel=lambda x: np.zeros((n, n, n)),
        tangent_to_chart=lambda x, v: np.asarray(v, dtype=float).copy(),
        tangent_from_chart=lambda x, a: np.asarray(a, dtype=float).copy(),
        in_domain=lambda x: np.asarray(x).shape == (n,),
    )


_POLE_MARGIN = 1e-6


def _sphere_chart(R):
    def in_domain(x):
        theta, phi = x
        return _POLE_MARGIN < theta < np.pi - _POLE_MARGIN and -np.pi < phi < np.pi

    def check(x):
        x = np.asarray(x, dtype=float)
        if x.shape != (2,) or not in_domain(x):
            raise ChartDomainError(f"spherical coordinates {x} outside the chart domain")
        return x

    def from_chart(x):
        theta, phi = check(x)
        st = np.sin(theta)
        return R @ np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])

    def to_chart(p):
        u = R.T @ np.asarray(p, dtype=float)
        x = np.array([np.arccos(np.clip(u[2], -1.0, 1.0)), np.arctan2(u[1], u[0])])
        if not in_domain(x):
            raise ChartDomainError("point lies at a pole of the spherical chart")
        return x

    def jacobian(x):
        theta, phi = x
        ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
        J = np.array([[ct * cp, -st * sp], [ct * sp, st * cp], [-st, 0.0]])
        return R @ J

    def metric(x):
        theta = check(x)[0]
        return np.diag([1.0, np.sin(theta) ** 2])

    def christoffel(x):
        theta = check(x)[0]
        G = np.zeros((2, 2, 2))
        G[0, 1, 1] = -np.sin(theta) * np.cos(theta)
        G[1, 0, 1] = G[1, 1, 0] = np.cos(theta) / np.sin(theta)
        return G

    def tangent_to_chart(x, v):
        J = jacobian(check(x))
        return np.linalg.solve(J.T @ J, J.T @ np.asarray(v, dtype=float))

    def tangent_from_chart(x, a):
        return jacobian(check(x)) @ np.asarray(a, dtype=float)

    return ChartBundle(2, to_chart, from_chart, metric, christoffel,
                       tangent_to_chart, tangent_from_chart, in_domain)


def _spd_chart(n):
    iu = np.triu_indices(n)
    d = len(iu[0])
    basis = []
    for i, j in zip(*iu):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        basis.append(E)

    def from_coords(x):
        x = np.asarray(x, dtype=float)
        if x.shape != (d,):
            raise ChartDomainError(f"expected {d} coordinates")
        M = np.zeros((n, n))
        M[iu] = x
        return M + np.triu(M, 1).T

    def in_domain(x):
        try:
            return bool(np.linalg.eigvalsh(from_coords(x))[0] > 0)
        except ChartDomainError:
            return False

    def from_chart(x):
        A = from_coords(x)
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise ChartDomainError("coordinates do not describe a positive definite matrix")
        return A

    def to_chart(A):
        return np.asarray(A, dtype=float)[iu].copy()

    def metric(x):
        Ai = np.linalg.inv(from_chart(x))
        P = [Ai @ E for E in basis]
        return np.array([[np.trace(Pa @ Pb) for Pb in P] for Pa in P])

    def christoffel(x):
        Ai = np.linalg.inv(from_chart(x))
        G = np.zeros((d, d, d))
        for a, Ea in enumerate(basis):
            for b in range(a, d):
                Eb = basis[b]
                G[:, a, b] = G[:, b, a] = to_chart(-0.5 * (Ea @ Ai @ Eb + Eb @ Ai @ Ea))
        return G

    return ChartBundle(
        dim=d,
        to_chart=to_chart,
        from_chart=from_chart,
        metric_matrix=metric,
        christoffel=christoffel,
        tangent_to_chart=lambda x, V: to_chart(V),
        tangent_from_chart=lambda x, a: from_coords(a),
        in_domain=in_domain,
    )


def rotation_to(axis) -> np.ndarray:
    """A rotation matrix taking e3 to the unit vector ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    b1 = Sphere2().tangent_basis(a)[0]
    b2 = np.cross(a, b1)
    return np.column_stack([b1, b2, a])
