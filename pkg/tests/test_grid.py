import numpy as np
import pytest
import scipy.sparse as sp

from quatma.grid import FiniteDiff2, Jet, JetDiff, SpectralDiff, TorusGrid, make_diff, random_trig_field


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(1, (8, 8, 8))
    with pytest.raises(ValueError):
        TorusGrid(1, (8, 8, 8, 2))
    with pytest.raises(ValueError):
        TorusGrid(0, ())
    with pytest.raises(ValueError):
        SpectralDiff(TorusGrid(1, (8, 8, 8, 7)))
    with pytest.raises(ValueError):
        make_diff(TorusGrid.cube(1, 4), "nope")


def test_grid_geometry():
    g = TorusGrid(1, (4, 6, 8, 10), (1.0, 2.0, 1.0, 0.5))
    assert g.npoints == 4 * 6 * 8 * 10
    assert g.spacing == (0.25, 2.0 / 6, 0.125, 0.05)
    assert g.volume == pytest.approx(1.0)
    assert g.cell_volume * g.npoints == pytest.approx(g.volume)
    assert g.points().shape == (g.npoints, 4)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.0)
    assert np.allclose(g.wrap_distance(np.array([0.9, 0, 0, 0]), np.zeros(4)), [-0.1, 0, 0, 0])


def test_shift_is_periodic_translation():
    g = TorusGrid.cube(1, 4)
    f = np.arange(g.npoints, dtype=float).reshape(g.shape)
    assert np.array_equal(g.shift(g.shift(f, (1, 2, 3, 0)), (-1, -2, -3, 0)), f)
    assert g.shift(f, (1, 0, 0, 0))[1, 0, 0, 0] == f[0, 0, 0, 0]


@pytest.mark.parametrize("scheme", ["spectral", "fd2"])
def test_derivatives_of_a_mode(scheme):
    g = TorusGrid.cube(1, 8)
    d = make_diff(g, scheme)
    x = g.coords(1)
    f = np.sin(2 * np.pi * x)
    h = g.spacing[1]
    if scheme == "spectral":
        k1, k2 = 2 * np.pi, (2 * np.pi) ** 2
    else:
        k1 = np.sin(2 * np.pi * h) / h
        k2 = (2 - 2 * np.cos(2 * np.pi * h)) / h**2
    assert np.abs(d.d1(f, 1) - k1 * np.cos(2 * np.pi * x)).max() < 1e-12
    assert np.abs(d.d2(f, 1, 1) + k2 * f).max() < 1e-11
    assert np.abs(d.d1(f, 0)).max() < 1e-12


def test_spectral_nyquist_handling():
    g = TorusGrid.cube(1, 6)
    d = SpectralDiff(g)
    t = g.coords(0)
    nyq = np.cos(np.pi * t / g.spacing[0])  # alternating +-1
    assert np.abs(d.d1(nyq, 0)).max() < 1e-12
    # pure second derivatives keep the Nyquist mode: kernel = constants only
    assert np.abs(d.d2(nyq, 0, 0) + (np.pi / g.spacing[0]) ** 2 * nyq).max() < 1e-9
    lap = sum(d.d2_matrix(a, a) for a in range(4))
    s = np.linalg.svd(lap, compute_uv=False)
    assert s[-1] < 1e-9 and s[-2] > 1.0


@pytest.mark.parametrize("scheme", ["spectral", "fd2"])
def test_matrices_match_operators(scheme):
    g = TorusGrid(1, (4, 6, 4, 6))
    d = make_diff(g, scheme)
    f = random_trig_field(g, 3, max_mode=2)
    for a, b in [(0, 0), (1, 3), (2, 2), (0, 1)]:
        M = d.d2_matrix(a, b)
        assert sp.issparse(M) == (scheme == "fd2")
        assert np.abs(M @ f.ravel() - d.d2(f, a, b).ravel()).max() < 1e-9
    assert np.abs(d.d1_matrix(1) @ f.ravel() - d.d1(f, 1).ravel()).max() < 1e-10


def test_fd2_is_second_order():
    errs = []
    for side in (8, 16):
        g = TorusGrid.cube(1, side)
        d = FiniteDiff2(g)
        f = np.sin(2 * np.pi * g.coords(0)) * np.cos(2 * np.pi * g.coords(2))
        exact = -4 * np.pi**2 * f
        errs.append(np.abs(d.d2(f, 0, 0) - exact).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_hessian_batched_and_symmetric():
    g = TorusGrid.cube(1, 4)
    d = make_diff(g)
    u = np.stack([random_trig_field(g, s, max_mode=1) for s in range(2)])
    H = d.hessian(u)
    assert H.shape == (2,) + g.shape + (4, 4)
    assert np.array_equal(H, np.swapaxes(H, -1, -2))


def test_jets():
    f = Jet.identity()
    jd = JetDiff(4)
    e = 2 * jd.d2(f, 0, 1) - jd.d2(f, 2, 2) + 0.5j * jd.d2(f, 1, 0)
    assert e.coefficient(0, 1) == 2 + 0.5j
    C = e.second_order_matrix(4)
    assert C[0, 1] == C[1, 0] == (2 + 0.5j) / 2
    assert C[2, 2] == -1
    assert (e - e).is_zero()
    assert e.conj().coefficient(1, 0) == 2 - 0.5j
    with pytest.raises(ValueError):
        f.second_order_matrix(4)
    with pytest.raises(TypeError):
        f * f


def test_random_trig_field_is_seeded_and_band_limited():
    g = TorusGrid.cube(1, 8)
    a = random_trig_field(g, 5, max_mode=2)
    b = random_trig_field(g, 5, max_mode=2)
    assert np.array_equal(a, b)
    spec = np.abs(np.fft.fftn(a))
    k = np.abs(np.fft.fftfreq(8) * 8)
    high = np.maximum.reduce(np.meshgrid(k, k, k, k, indexing="ij")) > 2.5
    assert spec[high].max() < 1e-10 * spec.max()
