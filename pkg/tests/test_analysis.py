import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from problems import sphere_pair, spd_problem
from riemstab.analysis import (
    bifurcation_diagram,
    contractivity_sweep,
    enumerate_roots,
    estimate_local_constant,
    fit_order,
    flow_contraction_check,
    global_error_bound,
    global_error_study,
    karcher_mean,
    q_residual,
    region_chart,
)
from riemstab.errors import InvalidInputError
from riemstab.fields import KarcherFieldSpec, karcher_gradient_field, killing_rotation_field, zero_field
from riemstab.geometry import SPD, Sphere2
from riemstab.integrators import Method, gie_step

S2 = Sphere2()


def z_oracle(h):
    """Roots of q(z, h) = 0: zero plus +-sqrt(1 - (pi/h)^2 (k + 1/2)^2) for admissible k."""
    roots = [0.0]
    k = 0
    while (np.pi / h) * (k + 0.5) < 1:
        r = np.sqrt(1 - ((np.pi / h) * (k + 0.5)) ** 2)
        roots += [r, -r]
        k += 1
    return sorted(roots)


# --------------------------------------------------------------------------
# bifurcation


@pytest.mark.parametrize("h", [np.pi, 2 * np.pi, 3 * np.pi, 1.0, 5.5, 11.0])
def test_roots_match_closed_form(h):
    got = enumerate_roots(0.0, h)
    want = z_oracle(h)
    assert len(got) == len(want)
    assert np.allclose(got, want, atol=1e-10)


def test_root_examples():
    assert enumerate_roots(0.0, 1.0) == [0.0]
    r = enumerate_roots(0.0, np.pi)
    assert np.allclose(r, [-np.sqrt(3) / 2, 0.0, np.sqrt(3) / 2], atol=1e-12)
    assert len(enumerate_roots(1e-4, np.pi)) == 3
    assert len(enumerate_roots(0.0, 5 * np.pi / 2 + 0.01)) == 7
    assert len(enumerate_roots(0.9, 1.0)) == 1


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e-3, 1e-3), st.integers(0, 3), st.floats(0.05, 0.95))
def test_root_count_parity(z0, m, frac):
    lo = max((2 * m - 1) * np.pi / 2, 0.0)
    hi = (2 * m + 1) * np.pi / 2
    h = lo + frac * (hi - lo)
    roots = enumerate_roots(z0, h)
    assert len(roots) == 2 * m + 1
    assert all(abs(q_residual(z, h) - z0) <= 1e-10 for z in roots)


@pytest.mark.parametrize("z0,h", [(1e-4, np.pi), (0.0, 2.0), (2e-4, 4.0)])
def test_roots_lift_to_gie_solutions(z0, h):
    y = np.array([np.sqrt(1 - z0 * z0), 0.0, z0])
    out = gie_step(killing_rotation_field(), y, h, multistart=True)
    thirds = [s[2] for s in out.solutions]
    for r in enumerate_roots(z0, h):
        assert min(abs(r - t) for t in thirds) <= 1e-8


def test_bifurcation_diagram_counts_step_up():
    hs = np.linspace(4 * np.pi / 600, 4 * np.pi, 600)
    diag = bifurcation_diagram(0.0, hs)
    counts = np.array(diag.counts)
    expected = np.array([2 * int(np.floor(h / np.pi + 0.5)) + 1 for h in hs])
    away = np.array([min(abs(h - (2 * k + 1) * np.pi / 2) for k in range(4)) > 1e-2 for h in hs])
    assert np.array_equal(counts[away], expected[away])
    assert set(counts) == {1, 3, 5, 7, 9}


def test_enumerate_roots_rejects_bad_z0():
    with pytest.raises(InvalidInputError):
        enumerate_roots(1.5, 1.0)


# --------------------------------------------------------------------------
# sweeps


@pytest.mark.parametrize("method", ["GEE", "GIE", "GIMP", "SPHMP", "LIE_EULER(2)"])
def test_sweep_zero_field_is_exact(method):
    _, x0, y0 = sphere_pair()
    m = S2
    field = zero_field(m)
    recs = contractivity_sweep(method, field, x0, y0, [0.1, 0.5, 1.0])
    assert all(r.converged and r.d_after == r.d0 for r in recs)


def test_sweep_on_spd_zero_field():
    m = SPD(2)
    _, x0, y0 = spd_problem()
    for method in ("GEE", "GIE", "GIMP"):
        recs = contractivity_sweep(method, zero_field(m), x0, y0, [0.1, 1.0])
        assert all(r.d_after == pytest.approx(r.d0, abs=1e-15) for r in recs)


def test_sweep_rejects_bad_input():
    field, x0, y0 = spd_problem()
    with pytest.raises(InvalidInputError):
        contractivity_sweep("GIE", field, x0, x0, [0.1])
    with pytest.raises(InvalidInputError):
        contractivity_sweep("GIE", field, x0, y0, [0.5, 0.1])


def test_sweep_records_overflow_as_unconverged():
    # large-target Karcher field: GEE leaves the cone for big steps
    a = 2.5
    spec = KarcherFieldSpec((np.diag([np.exp(2 * a), np.exp(-2 * a)]), np.diag([np.exp(-2 * a), np.exp(2 * a)])))
    field = karcher_gradient_field(spec)
    x0 = np.array([[1.2, 0.3], [0.3, 0.9]])
    y0 = np.array([[1.0, 0.0], [0.0, 2.0]])
    recs = contractivity_sweep("GEE", field, x0, y0, [0.1, 5.0])
    assert len(recs) == 2
    assert recs[-1].d_after is None or np.isfinite(recs[-1].d_after)


def test_sphere_midpoint_methods_keep_latitude():
    field, x0, y0 = sphere_pair()
    for method in ("GIMP", "SPHMP"):
        recs = contractivity_sweep(method, field, x0, y0, np.linspace(0.05, 1.5, 10))
        assert all(r.converged for r in recs)
    # same-latitude pairs move rigidly, so their distance is kept
    p = S2.project([0.6, 0.0, 0.5])
    q = S2.project([0.6 * np.cos(0.9), 0.6 * np.sin(0.9), 0.5])
    for method in ("GIMP", "SPHMP"):
        recs = contractivity_sweep(method, field, p, q, np.linspace(0.05, 1.5, 10))
        assert max(abs(r.d_after - r.d0) for r in recs) <= 1e-9


def test_gie_contracts_same_latitude_pair():
    field = killing_rotation_field()
    p = S2.project([0.6, 0.0, 0.5])
    q = S2.project([0.6 * np.cos(0.9), 0.6 * np.sin(0.9), 0.5])
    recs = contractivity_sweep("GIE", field, p, q, np.linspace(0.05, 1.0, 10))
    assert all(r.d_after <= r.d0 + 1e-12 for r in recs)


# --------------------------------------------------------------------------
# error bounds


@pytest.mark.parametrize("nu", [-2.0, -0.1, 0.0, 0.3])
def test_global_error_bound_cases(nu):
    C, p, t, h = 1.7, 2, 1.5, 0.05
    got = global_error_bound(C, nu, p, t, h)
    if nu == 0:
        assert got == pytest.approx(C * t * h**p)
    elif nu > 0:
        assert got == pytest.approx(C / nu * (np.exp(t * nu) - 1) * h**p)
    else:
        assert got == pytest.approx(C * np.exp(-nu * h) / nu * (np.exp(t * nu) - 1) * h**p)
    assert got > 0


def test_global_error_bound_continuous_at_zero():
    a = global_error_bound(1.0, 1e-9, 1, 2.0, 0.1)
    b = global_error_bound(1.0, 0.0, 1, 2.0, 0.1)
    c = global_error_bound(1.0, -1e-9, 1, 2.0, 0.1)
    assert a == pytest.approx(b, rel=1e-6) and c == pytest.approx(b, rel=1e-6)


def test_fit_order_exact_power():
    h = np.array([0.1, 0.05, 0.025])
    assert fit_order(h, 3 * h**2) == pytest.approx(2.0)


def test_local_constant_is_a_bound():
    field, x0, _ = spd_problem()
    hs = [0.1, 0.05]
    C = estimate_local_constant("GIE", field, [x0], hs)
    m = field.manifold
    from riemstab.integrators import reference_flow, step

    for h in hs:
        err = m.dist(reference_flow(field, x0, h, 1e-12), step("GIE", field, x0, h).point)
        assert err <= C * h**2 * (1 + 1e-12)


def test_global_error_study_rejects_non_divisor():
    field, x0, _ = spd_problem()
    with pytest.raises(InvalidInputError):
        global_error_study("GIE", field, x0, 1.0, [0.3], -2.0, 1.0)


def test_global_error_study_report():
    field, x0, _ = spd_problem()
    rep = global_error_study(Method("GIMP"), field, x0, 0.5, [0.1, 0.05, 0.025], -2.0, 3.0)
    assert rep.steps == [5, 10, 20]
    assert rep.p == 2
    assert rep.order_estimate == pytest.approx(2.0, abs=0.1)
    assert rep.bound_holds


def test_flow_contraction_on_spd():
    field, x0, y0 = spd_problem()
    rows = flow_contraction_check(field, x0, y0, -2.0, [0.25, 0.5, 1.0], 1e-10)
    assert not any(r.violated for r in rows)
    assert all(r.d <= r.bound for r in rows)


def test_flow_contraction_flags_wrong_nu():
    field, x0, y0 = spd_problem()
    rows = flow_contraction_check(field, x0, y0, -10.0, [0.5, 1.0], 1e-10)
    assert any(r.violated for r in rows)


def test_region_chart_centres_point():
    c = S2.project([0.0, 0.1, 1.0])
    chart = region_chart(S2, c)
    x = chart.to_chart(c)
    assert x[0] == pytest.approx(np.pi / 2)
    assert x[1] == pytest.approx(0.0, abs=1e-12)


# --------------------------------------------------------------------------
# Karcher mean


def test_karcher_single_target():
    Y = np.array([[2.0, 0.4], [0.4, 1.5]])
    assert np.allclose(karcher_mean(KarcherFieldSpec((Y,))), Y, atol=1e-10)


def test_karcher_pair_is_identity():
    spec = KarcherFieldSpec((np.diag([np.e**2, 1.0]), np.diag([np.e**-2, 1.0])))
    assert np.allclose(karcher_mean(spec), np.eye(2), atol=1e-12)


def test_karcher_commuting_targets_log_average():
    ds = [np.array([1.0, 4.0, 0.5]), np.array([3.0, 0.2, 2.0]), np.array([0.7, 1.1, 5.0])]
    spec = KarcherFieldSpec(tuple(np.diag(d) for d in ds))
    expected = np.diag(np.exp(np.mean([np.log(d) for d in ds], axis=0)))
    assert np.allclose(karcher_mean(spec), expected, atol=1e-10)


def test_karcher_geodesic_midpoint_oracle():
    m = SPD(2)
    rng = np.random.default_rng(4)
    A, B = m.random_point(rng, 1.5), m.random_point(rng, 1.5)
    mid = m.exp(A, 0.5 * m.log(A, B))
    assert np.allclose(karcher_mean(KarcherFieldSpec((A, B))), mid, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_karcher_permutation_invariant_and_stationary(seed, k):
    rng = np.random.default_rng(seed)
    m = SPD(2)
    Ys = [m.random_point(rng, 1.5) for _ in range(k)]
    spec = KarcherFieldSpec(tuple(Ys))
    star = karcher_mean(spec, tol=1e-10)
    field = karcher_gradient_field(spec)
    assert m.norm(star, field(star)) <= 1e-10
    assert np.max(np.abs(field(star))) <= 1e-8
    for perm in itertools.islice(itertools.permutations(Ys), 1, 3):
        other = karcher_mean(KarcherFieldSpec(tuple(perm)), tol=1e-10)
        assert m.dist(star, other) <= 1e-9


def test_karcher_fixture_targets():
    field, _, _ = spd_problem()
    spec = KarcherFieldSpec(tuple(np.asarray(Y) for Y in field.params["targets"]))
    assert np.allclose(karcher_mean(spec), np.sqrt(1.5) * np.eye(2), atol=1e-10)
