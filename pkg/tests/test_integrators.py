import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from problems import rot_z, sphere_pair, spd_problem
from riemstab.analysis import fit_order, karcher_mean
from riemstab.errors import DegenerateInputError, InvalidInputError
from riemstab.fields import KarcherFieldSpec, karcher_gradient_field, killing_rotation_field, linear_field, zero_field
from riemstab.geometry import SPD, Sphere2
from riemstab.integrators import (
    IntegrationError,
    Method,
    SolverConfig,
    gee_step,
    gie_step,
    gimp_step,
    integrate,
    lie_euler_implicit_step,
    reference_flow,
    reference_trajectory,
    rodrigues,
    sphmp_step,
    step,
)

S2 = Sphere2()
E1, E2, E3 = np.eye(3)
KILLING = killing_rotation_field()
TOL = SolverConfig().tolerance


# --------------------------------------------------------------------------
# configuration objects


def test_method_parse_and_order():
    assert Method.parse("gimp").order == 2
    assert Method.parse("SPHMP").order == 2
    assert Method.parse("GIE").order == 1
    m = Method.parse("LIE_EULER(2)")
    assert m == Method("LIE_EULER_IMPLICIT", 2.0)
    assert str(m) == "LIE_EULER_IMPLICIT(2)"
    with pytest.raises(InvalidInputError):
        Method.parse("RK4")
    with pytest.raises(InvalidInputError):
        Method("LIE_EULER_IMPLICIT")


@pytest.mark.parametrize("kwargs", [{"tolerance": 0.0}, {"max_iterations": 0},
                                    {"strategy": "bisection"}, {"predictor": "oracle"}])
def test_solver_config_validation(kwargs):
    with pytest.raises(InvalidInputError):
        SolverConfig(**kwargs)


# --------------------------------------------------------------------------
# worked examples on the rotation field


def test_gee_quarter_turn():
    assert np.allclose(gee_step(KILLING, E1, np.pi / 2).point, E2, atol=1e-15)


def test_gie_quarter_turn():
    out = gie_step(KILLING, E1, np.pi / 2)
    assert out.converged
    assert np.allclose(out.point, E2, atol=1e-10)


def test_gimp_half_turn():
    out = gimp_step(KILLING, E1, np.pi)
    assert np.allclose(out.point, -E1, atol=1e-10)
    assert np.allclose(out.midpoints[0], E2, atol=1e-10)


def test_sphmp_eighth_turn():
    # on the equator |z - y| = h |X(m)| gives a turn of beta with h = 2 sin(beta / 2)
    out = sphmp_step(KILLING, E1, 2 * np.sin(np.pi / 8))
    assert np.allclose(out.point, rot_z(np.pi / 4) @ E1, atol=1e-10)


def test_sphmp_rejects_non_sphere():
    with pytest.raises(InvalidInputError):
        sphmp_step(zero_field(SPD(2)), np.eye(2), 0.1)


@pytest.mark.parametrize("h", [10.0, 1e3, 1e9])
def test_sphmp_huge_steps_never_return_bogus_points(h):
    y = S2.project([1.0, 0.0, 0.1])
    try:
        out = sphmp_step(KILLING, y, h)
    except DegenerateInputError:
        return
    if out.converged:
        z = out.point
        s = (y + z) / np.linalg.norm(y + z)
        assert np.linalg.norm(z - y - h * KILLING(s)) <= 1e-9 * h


def test_rodrigues_matches_rotation_matrix():
    rng = np.random.default_rng(0)
    for _ in range(20):
        angle = rng.uniform(-4, 4)
        p = S2.random_point(rng)
        assert np.allclose(rodrigues(angle * E3, p), rot_z(angle) @ p, atol=1e-14)


@pytest.mark.parametrize("h", [0.5, 1.0, 2.0, 3.0])
def test_lie_euler_c1_is_exact_rotation(h):
    y = S2.project([0.3, -0.4, 0.8])
    out = step(Method("LIE_EULER_IMPLICIT", 1.0), KILLING, y, h)
    assert np.allclose(out.point, rot_z(h) @ y, atol=1e-12)


@pytest.mark.parametrize("h", [0.2, 0.7, 1.5])
def test_lie_euler_c0_is_gie(h):
    _, x0, _ = sphere_pair()
    a = step(Method("LIE_EULER_IMPLICIT", 0.0), KILLING, x0, h).point
    b = gie_step(KILLING, x0, h).point
    assert np.linalg.norm(a - b) <= 2 * TOL


def test_lie_euler_needs_isotropy():
    with pytest.raises(InvalidInputError):
        lie_euler_implicit_step(zero_field(SPD(2)), np.eye(2), 0.1)


def test_gie_multistart_near_equator():
    # third components of the three solutions: one near the start, two near +-sqrt(3)/2
    y = np.array([np.sqrt(1 - 1e-6), 0.0, 1e-3])
    out = gie_step(KILLING, y, np.pi, multistart=True)
    thirds = sorted(s[2] for s in out.solutions)
    assert len(thirds) == 3
    assert thirds[1] == pytest.approx(-1e-3, abs=1e-4)
    assert thirds[0] == pytest.approx(-np.sqrt(3) / 2, abs=2e-3)
    assert thirds[2] == pytest.approx(np.sqrt(3) / 2, abs=2e-3)
    for z in out.solutions:
        assert np.linalg.norm(S2.exp(z, -np.pi * KILLING(z)) - y) <= 1e-10
    for i, a in enumerate(out.solutions):
        for b in out.solutions[i + 1:]:
            assert S2.dist(a, b) >= 1e-6


def test_multistart_off_sphere_needs_grid():
    field, x0, _ = spd_problem()
    with pytest.raises(InvalidInputError):
        gie_step(field, x0, 0.1, multistart=True)


# --------------------------------------------------------------------------
# defining relations and invariants


def _defining_residual(name, field, y, h, out):
    m = field.manifold
    z = out.point
    if name == "GIE":
        return np.max(np.abs(m.exp(z, -h * field(z)) - y))
    if name == "GIMP":
        mid = out.midpoints[0]
        return max(np.max(np.abs(m.exp(mid, -0.5 * h * field(mid)) - y)),
                   np.max(np.abs(m.exp(mid, 0.5 * h * field(mid)) - z)))
    if name == "SPHMP":
        s = (y + z) / np.linalg.norm(y + z)
        return np.max(np.abs(z - y - h * field(s)))
    return np.max(np.abs(rodrigues(h * field.isotropy(z), y) - z))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["GIE", "GIMP", "SPHMP", "LIE_EULER_IMPLICIT(0)"]),
       st.floats(0.01, 1.2), st.integers(0, 10**6))
def test_sphere_defining_relations(name, h, seed):
    y = S2.random_point(np.random.default_rng(seed))
    method = Method.parse(name)
    out = step(method, KILLING, y, h)
    assert out.converged
    assert abs(np.linalg.norm(out.point) - 1) <= 1e-12
    field = KILLING if method.c is None else killing_rotation_field(method.c)
    assert _defining_residual(method.name, field, y, h, out) <= 10 * TOL


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["GEE", "GIE", "GIMP"]), st.floats(0.01, 2.0), st.integers(0, 10**6))
def test_spd_outputs_stay_spd(name, h, seed):
    field, _, _ = spd_problem()
    m = field.manifold
    y = m.random_point(np.random.default_rng(seed), 1.0)
    out = step(name, field, y, h)
    assert out.converged
    z = out.point
    assert np.max(np.abs(z - z.T)) <= 1e-12
    assert np.linalg.eigvalsh(z)[0] > 0
    if name != "GEE":
        assert _defining_residual(name, field, y, h, out) <= 1e-9 * max(1.0, np.abs(y).max())


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.3), st.integers(0, 10**6))
def test_gimp_self_adjoint(h, seed):
    field, _, _ = spd_problem()
    m = field.manifold
    y = m.random_point(np.random.default_rng(seed), 1.0)
    z = gimp_step(field, y, h).point
    back = gimp_step(field, z, -h).point
    assert m.dist(back, y) <= 2 * TOL * 10


def test_gimp_self_adjoint_sphere():
    y = S2.project([0.2, 0.5, 0.7])
    z = gimp_step(KILLING, y, 0.8).point
    assert np.linalg.norm(gimp_step(KILLING, z, -0.8).point - y) <= 2 * TOL


def test_gee_iterates_stay_unit():
    traj = integrate("GEE", KILLING, S2.project([1.0, 2.0, 3.0]), 0.1, 10)
    assert len(traj) == 11
    assert all(abs(np.linalg.norm(p) - 1) <= 1e-12 for p in traj)


def test_integrate_single_step_is_step():
    field, x0, _ = spd_problem()
    traj = integrate("GIE", field, x0, 0.3, 1)
    assert np.array_equal(traj[1], gie_step(field, x0, 0.3).point)


def test_integrate_rejects_zero_steps():
    with pytest.raises(InvalidInputError):
        integrate("GEE", KILLING, E1, 0.1, 0)


def test_integrate_reports_failure():
    cfg = SolverConfig(max_iterations=1, strategy="newton")
    with pytest.raises(IntegrationError) as info:
        integrate("GIE", KILLING, S2.project([0.3, 0.2, 0.9]), 1.0, 3, cfg)
    assert info.value.step_index == 0


def test_gie_contracts_towards_karcher_mean():
    Y1, Y2 = np.diag([np.e**2, 1.0]), np.diag([np.e**-2, 1.0])
    spec = KarcherFieldSpec((Y1, Y2))
    field = karcher_gradient_field(spec)
    m = field.manifold
    star = karcher_mean(spec)
    traj = integrate("GIE", field, np.array([[3.0, 1.0], [1.0, 2.0]]), 0.4, 15)
    d = [m.dist(p, star) for p in traj]
    assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))


@pytest.mark.parametrize("strategy", ["newton", "fixed-point"])
def test_strategies_agree_on_small_steps(strategy):
    field, x0, _ = spd_problem()
    ref = gie_step(field, x0, 0.05).point
    out = gie_step(field, x0, 0.05, SolverConfig(strategy=strategy, max_iterations=200))
    assert out.converged
    assert np.allclose(out.point, ref, atol=1e-10)


def test_previous_point_predictor():
    field, x0, _ = spd_problem()
    a = gie_step(field, x0, 0.2).point
    b = gie_step(field, x0, 0.2, SolverConfig(predictor="previous-point")).point
    assert np.allclose(a, b, atol=1e-10)


def test_zero_field_fixed_point():
    m = SPD(2)
    A = np.array([[2.0, 0.1], [0.1, 1.0]])
    for name in ("GEE", "GIE", "GIMP"):
        assert np.allclose(step(name, zero_field(m), A, 0.7).point, A, atol=1e-15)


# --------------------------------------------------------------------------
# consistency orders and the reference flow


def test_reference_flow_killing_is_rotation():
    y = S2.project([0.1, 0.7, 0.4])
    assert np.allclose(reference_flow(KILLING, y, 1.3, 1e-12), rot_z(1.3) @ y, atol=1e-11)


def test_reference_flow_linear_is_expm():
    scipy_linalg = pytest.importorskip("scipy.linalg")
    A = np.array([[-1.0, 4.0], [0.0, -3.0]])
    y0 = np.array([1.0, -0.5])
    out = reference_flow(linear_field(A), y0, 0.8, 1e-12)
    assert np.allclose(out, scipy_linalg.expm(0.8 * A) @ y0, atol=1e-11)


def test_reference_flow_against_scipy_ode():
    integrate_mod = pytest.importorskip("scipy.integrate")
    field, x0, _ = spd_problem()

    def rhs(t, y):
        return field(y.reshape(2, 2)).ravel()

    sol = integrate_mod.solve_ivp(rhs, (0, 1.0), x0.ravel(), method="DOP853", rtol=1e-13, atol=1e-13)
    ours = reference_flow(field, x0, 1.0, 1e-12)
    assert np.allclose(ours, sol.y[:, -1].reshape(2, 2), atol=1e-10)


def test_reference_trajectory_starts_at_initial_point():
    field, x0, _ = spd_problem()
    traj = reference_trajectory(field, x0, [0.0, 0.5, 1.0], 1e-10)
    assert np.array_equal(traj[0], x0)
    assert np.allclose(traj[2], reference_flow(field, x0, 1.0, 1e-10), atol=1e-9)


@pytest.mark.parametrize("name,expected", [("GEE", 2), ("GIE", 2), ("GIMP", 3)])
def test_local_error_orders(name, expected):
    field, x0, _ = spd_problem()
    m = field.manifold
    hs = [2.0**-k for k in range(3, 10)]
    errs = [m.dist(reference_flow(field, x0, h, 1e-13), step(name, field, x0, h).point) for h in hs]
    # the coarse end is pre-asymptotic; the finest pair shows the order cleanly
    assert fit_order(hs, errs) == pytest.approx(expected, abs=0.2)
    assert fit_order(hs[-2:], errs[-2:]) == pytest.approx(expected, abs=0.05)
