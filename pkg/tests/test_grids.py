import numpy as np
import pytest
from numpy.testing import assert_allclose

from htrw import grids, special
from htrw.errors import CapacityError, ConfigError, StateError


def gaussian(t, t0, sigma):
    return np.exp(-0.5 * ((t - t0) / sigma) ** 2)


def gaussian_transform(z, t0, sigma):
    """int exp(-(t-t0)^2 / 2 sigma^2) exp(i z t) dt for complex z."""
    return sigma * np.sqrt(2 * np.pi) * np.exp(1j * z * t0 - 0.5 * sigma ** 2 * z ** 2)


def gaussian_deriv(n, t, t0, sigma):
    u = (t - t0) / (sigma * np.sqrt(2))
    Hn = np.polynomial.hermite.hermval(u, [0] * n + [1])
    return (-1 / (sigma * np.sqrt(2))) ** n * Hn * np.exp(-u * u)


# ---------------------------------------------------------------------------
# sphere and time grids


@pytest.mark.parametrize("d,area", [(2, 2 * np.pi), (3, 4 * np.pi)])
def test_sphere_weights_and_antipodes(d, area):
    g = grids.make_sphere_grid(d, 32)
    assert_allclose(g.weights.sum(), area, rtol=1e-14)
    assert_allclose(np.linalg.norm(g.nodes, axis=1), 1.0, rtol=1e-14)
    a = g.antipodes()
    assert_allclose(g.nodes[a], -g.nodes, atol=1e-14)
    assert g.max_lmax == 15


def test_sphere_grid_errors():
    with pytest.raises(ConfigError):
        grids.make_sphere_grid(3, 31)
    with pytest.raises(ConfigError):
        grids.make_sphere_grid(4, 32)


def test_antipodes_generic_fallback():
    g = grids.make_sphere_grid(2, 8)
    perm = np.array([3, 1, 7, 0, 5, 2, 6, 4])
    h = grids.SphereGrid(2, 8, g.nodes[perm], g.weights[perm])
    a = h.antipodes()
    assert_allclose(h.nodes[a], -h.nodes, atol=1e-14)
    odd = grids.SphereGrid(2, 8, g.nodes[:5], g.weights[:5])
    with pytest.raises(ConfigError):
        odd.antipodes()


def test_time_grid():
    tg = grids.TimeGrid()
    assert tg.dt == 4.0 / 2048
    assert tg.n_phys == 513
    assert tg.t_phys[-1] == 1.0
    with pytest.raises(ConfigError):
        grids.TimeGrid(n_t=1000)
    with pytest.raises(ConfigError):
        grids.TimeGrid(t_ext=1.5)
    with pytest.raises(ConfigError):
        grids.TimeGrid(n_t=2048, t_ext=3.0)


# ---------------------------------------------------------------------------
# transforms


@pytest.mark.parametrize("eps", [0.0, 3.0, 10.0])
def test_forward_transform_gaussian(eps):
    tg = grids.TimeGrid()
    fg = grids.make_frequency_grid(tg, eps)
    t0, sigma = 1.3, 0.08
    c = grids.forward_transform(gaussian(tg.t, t0, sigma), fg)
    ref = gaussian_transform(fg.contour, t0, sigma)
    assert np.max(np.abs(c - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_spectrum_symmetry():
    tg = grids.TimeGrid(256)
    fg = grids.make_frequency_grid(tg, 2.0)
    x = np.random.default_rng(3).standard_normal(256)
    c = grids.forward_transform(x, fg)
    assert_allclose(c[::-1], np.conj(c), atol=1e-14)
    assert_allclose(fg.lam, -fg.lam[::-1])


def test_inverse_round_trip():
    tg = grids.TimeGrid(512)
    fg = grids.make_frequency_grid(tg, 5.0)
    x = gaussian(tg.t, 2.0, 0.2)
    c = grids.forward_transform(x, fg)
    assert_allclose(grids.inverse_transform(c, fg, tg.t[:300]).real, x[:300], atol=1e-12)
    # negative times see the periodic image damped by exp(-eps T_ext)
    neg = grids.inverse_at_negative_times(c, fg, 100)
    m = np.arange(101)
    image = np.where(m == 0, x[0], x[(-m) % tg.n_t] * np.exp(-fg.eps * tg.t_ext))
    assert_allclose(neg.real, image, atol=1e-12)
    assert_allclose(neg, grids.inverse_transform(c, fg, -m * tg.dt), atol=1e-12)


def test_spectral_derivatives_periodic_gaussian():
    tg = grids.TimeGrid(1024)
    fg = grids.make_frequency_grid(tg, 0.0)
    t0, sigma = 0.05, 0.15
    t = tg.t
    # the half-shifted frequency grid represents anti-periodic functions at eps = 0
    x = gaussian(t, t0, sigma) - gaussian(t, t0 + tg.t_ext, sigma) - gaussian(t, t0 - tg.t_ext, sigma)
    vals, scales = grids.spectral_derivatives(grids.forward_transform(x, fg), fg, 6)
    ref = np.array([gaussian_deriv(n, 0.0, t0, sigma) for n in range(7)])
    # roundoff grows like |lambda_max|^n
    atol = 1e-14 * np.abs(fg.lam).max() ** np.arange(7)
    assert np.all(np.abs(vals.real - ref) <= atol + 1e-9 * np.abs(ref))
    assert np.all(scales >= np.abs(vals) * (1 - 1e-12))


def test_transform_length_mismatch():
    tg = grids.TimeGrid(64, 4.0)
    with pytest.raises(ConfigError):
        grids.forward_transform(np.zeros(10), grids.make_frequency_grid(tg))


def test_adaptive_eps():
    tg = grids.TimeGrid()
    ext = np.zeros((2, tg.n_t))
    ext[:, :tg.n_phys] = 1.0
    ext[:, tg.n_phys:tg.n_phys + 5] = 0.5
    assert grids.adaptive_eps(tg, ext, tg.n_phys) == grids.default_eps(tg) == 10.0
    ext[0, tg.n_phys] = 1e6
    assert_allclose(grids.adaptive_eps(tg, ext, tg.n_phys), (40 + np.log(1e6)) / 4.0)
    assert grids.adaptive_eps(tg, np.zeros((1, tg.n_t)), tg.n_phys) == 10.0


# ---------------------------------------------------------------------------
# extensions


def test_taylor_extension_reproduces_polynomials():
    tg = grids.TimeGrid()
    t = tg.t_phys
    x = 0.3 - 2.0 * (t - 0.4) ** 3 + 0.5 * t ** 7
    ext = grids.Extension().apply(x, tg)
    tail_t = tg.t[tg.n_phys:]
    step = grids.smooth_step((tail_t - 1.0) / 0.5)
    poly = 0.3 - 2.0 * (tail_t - 0.4) ** 3 + 0.5 * tail_t ** 7
    assert_allclose(ext[:tg.n_phys], x)
    # endpoint derivatives of order >= 4 carry fit noise; it shows only away from t = 1
    near = tail_t <= 1.02
    assert_allclose(ext[tg.n_phys:][near], (poly * step)[near], atol=1e-7)
    assert np.all(ext[tg.n_phys + int(0.5 / tg.dt) + 1:] == 0)


def test_endpoint_derivatives_of_sine():
    tg = grids.TimeGrid()
    D = grids.Extension().endpoint_derivatives(np.sin(3 * tg.t_phys), tg)
    ref = [3 ** k * np.sin(1 * 3 + k * np.pi / 2) for k in range(11)]
    # exact-data accuracy decays with the order: ~1e-7 at k=3, ~1e-4 at k=4
    for k in range(4):
        assert abs(D[k] - ref[k]) <= 1e-6 * 3 ** k
    assert abs(D[4] - ref[4]) <= 1e-3 * 3 ** 4


def test_hermite_extension():
    tg = grids.TimeGrid()
    x = np.cos(2 * tg.t_phys)
    ext = grids.HermiteExtension().apply(x, tg)
    n = tg.n_phys
    # continuous value and slope at t = 1, vanishes from t = 2.5 on
    assert abs(ext[n] - np.cos(2 * tg.t[n])) < 1e-4
    # second-order one-sided slopes at t = 1 from either side
    left = (3 * ext[n - 1] - 4 * ext[n - 2] + ext[n - 3]) / (2 * tg.dt)
    right = (-3 * ext[n - 1] + 4 * ext[n] - ext[n + 1]) / (2 * tg.dt)
    assert abs(left + 2 * np.sin(2.0)) < 1e-4
    assert abs(right + 2 * np.sin(2.0)) < 1e-4
    assert np.all(ext[tg.t >= 2.5] == 0)


def test_extension_errors():
    tg = grids.TimeGrid(64, 2.0)
    with pytest.raises(ConfigError):
        grids.Extension(width=1.5).apply(np.zeros(33), tg)
    with pytest.raises(ConfigError):
        grids.Extension(order=10, fit_degree=5).endpoint_derivatives(np.zeros(33), tg)


def test_smooth_step():
    u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert_allclose(grids.smooth_step(u), [1, 1, 0.5, 0, 0])


# ---------------------------------------------------------------------------
# harmonic channels


@pytest.mark.parametrize("d", [2, 3])
def test_analysis_synthesis_round_trip(d):
    tg = grids.TimeGrid(64, 4.0)
    g = grids.make_sphere_grid(d, 16)
    lmax = 7
    rng = np.random.default_rng(11)
    coeffs = rng.standard_normal((grids.n_channels(d, lmax), tg.n_phys))
    Y = special.harmonic_matrix(d, lmax, g.nodes)
    b = grids.BoundaryData(g, tg, coeffs.T @ Y)
    c = grids.sh_analysis(b, lmax)
    assert_allclose(c.series, coeffs, atol=1e-12)
    assert_allclose(grids.sh_synthesis(c, g).values, b.values, atol=1e-12)
    assert c.b_norm == b.norm()


def test_analysis_capacity_and_state():
    tg = grids.TimeGrid(64, 4.0)
    g = grids.make_sphere_grid(3, 16)
    b = grids.BoundaryData(g, tg, np.zeros((tg.n_phys, g.size)))
    with pytest.raises(CapacityError):
        grids.sh_analysis(b, 8)
    c = grids.sh_analysis(b, 7)
    with pytest.raises(StateError):
        c.require_spectra()
    assert grids.extend_and_transform(c).has_spectra()


def test_boundary_shape_check():
    with pytest.raises(ConfigError):
        grids.BoundaryData(grids.make_sphere_grid(2, 8), grids.TimeGrid(64), np.zeros((3, 8)))


def test_boundary_norm():
    tg = grids.TimeGrid(64, 4.0)
    g = grids.make_sphere_grid(3, 8)
    b = grids.BoundaryData(g, tg, np.ones((tg.n_phys, g.size)))
    assert_allclose(b.norm(), np.sqrt(tg.dt * tg.n_phys * 4 * np.pi))
    assert_allclose(b.scaled(3.0).norm(), 3 * b.norm())
