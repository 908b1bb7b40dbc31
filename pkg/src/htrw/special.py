"""
Special functions: spherical Hankel/Bessel functions of the form

    h_l^d(z) = H^(1)_{l+d/2-1}(z) / z^{d/2-1},     j_l^d = Re h_l^d (real z),

real orthonormal spherical harmonics on S^{d-1} for d in {2, 3}, and the two
analytic identities (Wronskian, Jacobi-Anger) used as self-test oracles.

Arguments with negative real part are mapped through the reflection rule
h(z) = conj(h(-conj(z))), which on the real axis reads h(-x) = conj(h(x)).
"""

import math

import numpy as np
from scipy import special as sps

from .errors import CapacityError, DomainError

L_MAX = 64
DIMENSIONS = (2, 3)


def _check_dim(d):
    if d not in DIMENSIONS:
        raise DomainError(f"dimension must be 2 or 3, got {d}")


def _check_degree(l):
    if l < 0:
        raise DomainError(f"degree must be nonnegative, got {l}")
    if l > L_MAX:
        raise CapacityError(f"degree {l} exceeds L_MAX={L_MAX}")


def _hankel3_right(l, z):
    # exact finite sum for half-integer order, Re z > 0
    z = np.asarray(z, dtype=complex)
    total = np.zeros_like(z)
    inv2z = 1.0 / (2.0 * z)
    for k in range(l + 1):
        coef = math.factorial(l + k) / (math.factorial(k) * math.factorial(l - k))
        total = total + coef * (1j ** k) * inv2z ** k
    return math.sqrt(2.0 / math.pi) * (-1j) ** (l + 1) * np.exp(1j * z) / z * total


def _hankel2_right(l, z):
    return sps.hankel1(l, np.asarray(z, dtype=complex))


def sph_hankel(d, l, lam):
    """Spherical Hankel function h_l^d at real or complex argument.

    Parameters
    ----------
    d : int
        Dimension, 2 or 3.
    l : int
        Degree, ``0 <= l <= L_MAX``.
    lam : float, complex or array
        Argument; must have nonzero real part (the function is singular at 0).

    Returns
    -------
    complex ndarray (0-d for scalar input)
    """
    _check_dim(d)
    _check_degree(l)
    z = np.asarray(lam, dtype=complex)
    if np.any(z.real == 0.0):
        raise DomainError("sph_hankel is undefined at Re(lambda) = 0")
    right = z.real > 0
    # fold the left half-plane onto the right one, conjugate afterwards
    zr = np.where(right, z, -np.conj(z))
    if d == 3:
        val = _hankel3_right(l, zr)
    else:
        val = _hankel2_right(l, zr)
    # on the real axis the real part of the Hankel sum cancels badly for
    # lambda << l; take J and Y from their own series there
    real = z.imag == 0.0
    if np.any(real):
        x = np.abs(z.real[real])
        val = np.array(val, dtype=complex)
        val[real] = _bessel_pair(d, l, x)
    return np.where(right, val, np.conj(val))


def _bessel_pair(d, l, x):
    if d == 3:
        c = math.sqrt(2.0 / math.pi)
        return c * (sps.spherical_jn(l, x) + 1j * sps.spherical_yn(l, x))
    return sps.jv(l, x) + 1j * sps.yv(l, x)


def sph_bessel(d, l, lam):
    """j_l^d(x) = J_{l+d/2-1}(x) / x^{d/2-1} for x > 0."""
    _check_dim(d)
    _check_degree(l)
    x = np.asarray(lam, dtype=float)
    if np.any(x <= 0):
        raise DomainError("sph_bessel requires lambda > 0")
    return sph_hankel(d, l, x).real


def sph_hankel_deriv(d, l, lam):
    """Derivative of h_l^d via (h_l)' = (l/z) h_l - h_{l+1}."""
    z = np.asarray(lam, dtype=complex)
    if l + 1 > L_MAX:
        raise CapacityError(f"derivative of degree {l} needs degree {l + 1} > L_MAX")
    return (l / z) * sph_hankel(d, l, z) - sph_hankel(d, l + 1, z)


def wronskian_residual(d, l, lam):
    """Relative residual of h' j - h j' = 2i / (pi lam^{d-1}) at lam > 0."""
    x = np.asarray(lam, dtype=float)
    if np.any(x <= 0):
        raise DomainError("wronskian_residual requires lambda > 0")
    h = sph_hankel(d, l, x)
    dh = sph_hankel_deriv(d, l, x)
    j, dj = h.real, dh.real
    expected = 2j / (np.pi * x ** (d - 1))
    return np.abs(dh * j - h * dj - expected) / np.abs(expected)


# ---------------------------------------------------------------------------
# real spherical harmonics


def harmonic_indices(d, lmax):
    """Ordered list of (l, m) for all real harmonics of degree <= lmax.

    d=3 uses -l..l; d=2 uses m=0 for l=0 and m=+l (cosine), m=-l (sine).
    """
    _check_dim(d)
    out = []
    for l in range(lmax + 1):
        if d == 3:
            out.extend((l, m) for m in range(-l, l + 1))
        elif l == 0:
            out.append((0, 0))
        else:
            out.extend([(l, l), (l, -l)])
    return out


def _check_index(d, l, m):
    _check_degree(l)
    if d == 3 and abs(m) > l:
        raise DomainError(f"|m| must not exceed l, got l={l}, m={m}")
    if d == 2 and not (m == 0 and l == 0 or l > 0 and abs(m) == l):
        raise DomainError(f"d=2 harmonics use m in {{l, -l}} (or 0 for l=0), got l={l}, m={m}")


def _normalized_legendre(lmax, x):
    """P[l, m] = sqrt((2l+1)/(4pi) (l-m)!/(l+m)!) P_l^m(x), no Condon-Shortley phase."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((lmax + 1, lmax + 1) + x.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        P[m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, lmax):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def _check_directions(d, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != d:
        raise DomainError(f"directions must have trailing dimension {d}")
    norms = np.linalg.norm(theta, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise DomainError("directions must be unit vectors")
    return theta


def harmonic_matrix(d, lmax, theta):
    """Values of all harmonics of degree <= lmax at directions.

    Returns an array of shape ``(n_harmonics, n_points)`` with rows ordered as
    :func:`harmonic_indices`.
    """
    theta = _check_directions(d, np.atleast_2d(theta))
    idx = harmonic_indices(d, lmax)
    out = np.empty((len(idx), theta.shape[0]))
    if d == 2:
        phi = np.arctan2(theta[:, 1], theta[:, 0])
        for row, (l, m) in enumerate(idx):
            if l == 0:
                out[row] = 1.0 / np.sqrt(2.0 * np.pi)
            elif m > 0:
                out[row] = np.cos(l * phi) / np.sqrt(np.pi)
            else:
                out[row] = np.sin(l * phi) / np.sqrt(np.pi)
        return out
    z = np.clip(theta[:, 2], -1.0, 1.0)
    phi = np.arctan2(theta[:, 1], theta[:, 0])
    P = _normalized_legendre(lmax, z)
    for row, (l, m) in enumerate(idx):
        if m == 0:
            out[row] = P[l, 0]
        elif m > 0:
            out[row] = np.sqrt(2.0) * P[l, m] * np.cos(m * phi)
        else:
            out[row] = np.sqrt(2.0) * P[l, -m] * np.sin(-m * phi)
    return out


def real_sph_harm(d, l, m, theta):
    """Single real orthonormal harmonic Y_l^m at one or many unit directions."""
    _check_dim(d)
    _check_index(d, l, m)
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    vals = harmonic_matrix(d, l, np.atleast_2d(theta))
    row = harmonic_indices(d, l).index((l, m))
    return vals[row, 0] if single else vals[row]


def jacobi_anger_residual(d, l, m, lam, grid, omegas=None):
    """Max relative residual of the plane-wave projection identity

        int_S exp(-i lam w.t) Y_l^m(t) dt = (2pi)^{d/2} (-i)^l Y_l^m(w) j_l^d(lam)

    with the left side evaluated by the quadrature ``grid``.
    """
    _check_index(d, l, m)
    if grid.dim != d:
        raise DomainError("grid dimension does not match d")
    if grid.exact_degree < 2 * l + 8:
        raise CapacityError(
            f"sphere grid of exact degree {grid.exact_degree} too coarse for l={l}"
        )
    if omegas is None:
        omegas = _test_directions(d)
    Yt = real_sph_harm(d, l, m, grid.nodes)
    phase = np.exp(-1j * lam * (omegas @ grid.nodes.T))
    lhs = phase @ (Yt * grid.weights)
    rhs = (2 * np.pi) ** (d / 2) * (-1j) ** l * real_sph_harm(d, l, m, omegas) * sph_bessel(d, l, lam)
    scale = (2 * np.pi) ** (d / 2) * abs(sph_bessel(d, l, lam)) * np.max(np.abs(harmonic_matrix(d, l, omegas)))
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _test_directions(d):
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((7, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
