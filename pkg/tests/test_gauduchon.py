import numpy as np
import pytest

from quatma.forms import FormSpace, ddj_function
from quatma.gauduchon import (
    DegenerateFormError,
    GauduchonError,
    assemble_A,
    assemble_Astar,
    circulant_green,
    gauduchon_generator,
    green_function,
    green_reproduction_error,
    l1_bound,
    perturbed_omega,
    reference_forms,
    scaling_check,
)
from quatma.grid import TorusGrid, make_diff, random_trig_field


@pytest.fixture(scope="module")
def setup():
    g = TorusGrid.cube(1, 6)
    diff = make_diff(g)
    space = FormSpace(1, diff)
    s = random_trig_field(g, 0, max_mode=1)
    s = s * (3.0 / ddj_function(space, s).max_abs())
    omega = perturbed_omega(space, s, eps=0.1)
    h = 1 + 0.1 * sum(diff.d2(s, a, a) for a in range(4)) / 4
    omega, theta0 = reference_forms(space, omega)
    A = assemble_A(diff, omega, theta0)
    Astar = assemble_Astar(diff, omega, theta0, A=A)
    return dict(grid=g, diff=diff, space=space, omega=omega, theta0=theta0, h=h, A=A, Astar=Astar)


def test_flat_operator_is_quarter_laplacian():
    g = TorusGrid.cube(1, 6)
    diff = make_diff(g)
    omega, theta0 = reference_forms(FormSpace(1, diff))
    A = assemble_A(diff, omega, theta0)
    assert A.coefficients.keys() == {(a, a) for a in range(4)}
    assert all(np.allclose(c, 0.25) for c in A.coefficients.values())
    u = random_trig_field(g, 1, max_mode=2)
    lap = sum(diff.d2(u, a, a) for a in range(4))
    assert np.abs(A.apply(u) - lap / 4).max() < 1e-10
    np.testing.assert_allclose(A.weights, g.cell_volume)


def test_constants_in_kernel(setup):
    assert np.abs(setup["A"].apply(np.ones(setup["grid"].shape))).max() < 1e-12


def test_adjointness(setup):
    A, Astar = setup["A"], setup["Astar"]
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        f, g = rng.standard_normal((2,) + setup["grid"].shape)
        lhs = A.inner(A.apply(f), g)
        rhs = A.inner(f, Astar.apply(g))
        worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)))
    assert worst < 1e-10
    # with non-constant Omega the operator is not self-adjoint
    gap = np.abs(A.to_dense() - Astar.to_dense()).max()
    assert gap > 1e-2 * np.abs(A.to_dense()).max()


def test_n1_generator_is_inverse_conformal_factor(setup):
    res = gauduchon_generator(setup["diff"], setup["omega"], setup["theta0"], A=setup["A"], Astar=setup["Astar"])
    Gh = res.G * setup["h"]
    assert np.ptp(Gh) < 1e-10 * Gh.mean()
    assert res.ratio > 1e3
    assert res.G.min() > 0 and res.min_over_max < 1
    assert res.residual < 1e-10
    assert res.integral == pytest.approx(setup["A"].inner(np.ones(setup["grid"].shape), np.ones(setup["grid"].shape)))


def test_conformal_change_of_reference(setup):
    g = setup["grid"]
    psi = 1.2 + 0.3 * np.cos(2 * np.pi * g.coords(3))
    base = gauduchon_generator(setup["diff"], setup["omega"], setup["theta0"])
    _, theta_psi = reference_forms(setup["space"], setup["omega"], psi=psi)
    other = gauduchon_generator(setup["diff"], setup["omega"], theta_psi)
    r = other.G * psi / base.G
    assert np.ptp(r) < 1e-9 * r.mean()


def test_scaling_check(setup):
    res = gauduchon_generator(setup["diff"], setup["omega"], setup["theta0"])
    phi = 1.5 + 0.4 * np.sin(2 * np.pi * setup["grid"].coords(2))
    assert scaling_check(setup["diff"], setup["omega"], setup["theta0"], res.G, phi) < 1e-12
    with pytest.raises(ValueError):
        scaling_check(setup["diff"], setup["omega"], setup["theta0"], res.G, -phi)


def test_degenerate_reference_rejected(setup):
    g = setup["grid"]
    bump = sum(np.sin(np.pi * g.coords(a)) ** 2 for a in range(4))
    _, theta = reference_forms(setup["space"], setup["omega"], psi=bump)
    with pytest.raises(DegenerateFormError) as e:
        assemble_A(setup["diff"], setup["omega"], theta)
    assert "(0, 0, 0, 0)" in str(e.value)
    assert isinstance(e.value, ValueError)


def test_non_positive_omega_rejected(setup):
    g = setup["grid"]
    s = -2 * np.cos(2 * np.pi * g.coords(0))
    omega = perturbed_omega(setup["space"], s, eps=1.0)
    with pytest.raises(DegenerateFormError):
        assemble_A(setup["diff"], omega, setup["space"].power(omega, 1))


def test_flat_green_matches_circulant():
    g = TorusGrid.cube(1, 6)
    diff = make_diff(g)
    omega, theta0 = reference_forms(FormSpace(1, diff))
    A = assemble_A(diff, omega, theta0)
    rng = np.random.default_rng(4)
    kern = green_function(A, check_phis=list(rng.standard_normal((5,) + g.shape)))
    assert kern.G.min() == 0
    assert np.abs(kern.G - circulant_green(diff)).max() < 1e-9 * kern.G.max()


def test_green_requires_gauduchon(setup):
    # Theta0 = Omega^n is not Gauduchon for a perturbed Omega
    with pytest.raises(GauduchonError):
        green_function(setup["A"])


def test_perturbed_green_and_l1(setup):
    diff, omega = setup["diff"], setup["omega"]
    res = gauduchon_generator(diff, omega, setup["theta0"])
    A = assemble_A(diff, omega, res.theta)
    rng = np.random.default_rng(6)
    phis = list(rng.standard_normal((10,) + setup["grid"].shape))
    kern = green_function(A)
    assert green_reproduction_error(kern, A, phis) < 1e-9
    zero = l1_bound(diff, np.zeros(setup["grid"].shape), omega, A, kern)
    assert zero.lhs == 0 and zero.passed and zero.chain_value == pytest.approx(0, abs=1e-14)
    for seed in range(5):
        u = 0.02 * random_trig_field(setup["grid"], 10 + seed, max_mode=1)
        u -= u.max()
        rep = l1_bound(diff, u, omega, A, kern)
        assert rep.passed and rep.min_eigenvalue > 0
        assert rep.chain_value == pytest.approx(rep.chain_target, abs=1e-10)
    with pytest.raises(ValueError):
        l1_bound(diff, np.ones(setup["grid"].shape), omega, A, kern)
    with pytest.raises(ValueError):
        big = -5 * np.cos(2 * np.pi * setup["grid"].coords(0))
        l1_bound(diff, big - big.max(), omega, A, kern)


def test_n2_sparse_adjoint_agrees():
    g = TorusGrid.cube(2, 4)
    diff = make_diff(g, "fd2")
    space = FormSpace(2, diff)
    s = random_trig_field(g, 1, max_mode=1)
    dd = ddj_function(space, s)
    omega = perturbed_omega(space, s, eps=0.3 / dd.max_abs())
    omega, theta0 = reference_forms(space, omega)
    A = assemble_A(diff, omega, theta0)
    assert A.matrix.shape == (g.npoints, g.npoints)
    assemble_Astar(diff, omega, theta0, A=A)  # raises on disagreement
    assert np.abs(A.apply(np.ones(g.shape))).max() < 1e-10
