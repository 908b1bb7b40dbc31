"""
Discretizations and transforms.

Sphere quadrature, the uniform time grid, the half-sample-shifted frequency
grid, real spherical-harmonic analysis/synthesis and the time-to-frequency
transform of harmonic channels (with a smooth extension of the data past t=1).

Frequency transforms are evaluated on the line Im(lambda) = eps above the real
axis.  For functions vanishing at negative times this is the Fourier transform
of b(t) exp(-eps t); it places every pole of a causal transfer function strictly
below the integration contour and damps the periodic wrap-around of the
discrete transform by exp(-eps T_ext).
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import special
from .errors import CapacityError, ConfigError, StateError

TIME_TOL = 1e-12


# ---------------------------------------------------------------------------
# sphere


@dataclass(frozen=True, eq=False)
class SphereGrid:
    dim: int
    Q: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def exact_degree(self):
        """Highest polynomial degree integrated exactly."""
        return self.Q - 1

    @property
    def max_lmax(self):
        return self.Q // 2 - 1

    def antipodes(self):
        """Index array ``a`` with nodes[a[i]] == -nodes[i]; ConfigError if the grid lacks one."""
        if self.dim == 2:
            a = (np.arange(self.size) + self.size // 2) % self.size
        else:
            n_pol = self.Q // 2
            i_pol, i_az = np.divmod(np.arange(self.size), self.Q)
            a = (n_pol - 1 - i_pol) * self.Q + (i_az + self.Q // 2) % self.Q
        a = a % max(self.size, 1)
        if self.size and np.max(np.abs(self.nodes[a] + self.nodes)) < 1e-12:
            return a
        # generic grid: nearest-neighbour search
        dist = np.linalg.norm(self.nodes[None, :, :] + self.nodes[:, None, :], axis=2)
        a = np.argmin(dist, axis=1)
        if np.max(dist[np.arange(self.size), a]) > 1e-12:
            raise ConfigError("sphere grid is not closed under the antipodal map")
        return a

    def describe(self):
        return {"dimension": self.dim, "Q": self.Q, "nodes": self.size}


def make_sphere_grid(d, Q):
    """Product quadrature on S^{d-1}.

    d=2: Q equispaced angles.  d=3: Q/2 Gauss-Legendre nodes in cos(polar
    angle) times Q equispaced azimuths.
    """
    if d not in special.DIMENSIONS:
        raise ConfigError(f"dimension must be 2 or 3, got {d}")
    if Q < 4 or Q % 2:
        raise ConfigError(f"Q must be even and >= 4, got {Q}")
    phi = 2.0 * np.pi * np.arange(Q) / Q
    if d == 2:
        nodes = np.column_stack([np.cos(phi), np.sin(phi)])
        weights = np.full(Q, 2.0 * np.pi / Q)
    else:
        x, w = np.polynomial.legendre.leggauss(Q // 2)
        s = np.sqrt(1.0 - x * x)
        nodes = np.column_stack([
            np.outer(s, np.cos(phi)).ravel(),
            np.outer(s, np.sin(phi)).ravel(),
            np.repeat(x, Q),
        ])
        weights = np.repeat(w * 2.0 * np.pi / Q, Q)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereGrid(d, Q, nodes, weights)


# ---------------------------------------------------------------------------
# time / frequency


@dataclass(frozen=True)
class TimeGrid:
    n_t: int = 2048
    t_ext: float = 4.0

    def __post_init__(self):
        if self.n_t < 8 or self.n_t & (self.n_t - 1):
            raise ConfigError(f"n_t must be a power of two, got {self.n_t}")
        if self.t_ext < 2.0:
            raise ConfigError(f"t_ext must be >= 2, got {self.t_ext}")
        if abs(self.n_phys_exact - round(self.n_phys_exact)) > 1e-9:
            raise ConfigError("t = 1 must fall on a grid node (n_t / t_ext integer)")

    @property
    def dt(self):
        return self.t_ext / self.n_t

    @property
    def n_phys_exact(self):
        return self.n_t / self.t_ext

    @property
    def n_phys(self):
        """Number of samples in the physical window 0 <= t <= 1."""
        return int(round(self.n_phys_exact)) + 1

    @property
    def t(self):
        return np.arange(self.n_t) * self.dt

    @property
    def t_phys(self):
        return self.t[: self.n_phys]

    def describe(self):
        return {"n_t": self.n_t, "t_ext": self.t_ext}


@dataclass(frozen=True)
class FrequencyGrid:
    """lam_j = (j + 1/2 - n_t/2) * 2pi / t_ext, evaluated at lam_j + i*eps."""

    time: TimeGrid
    eps: float

    @property
    def dlam(self):
        return 2.0 * np.pi / self.time.t_ext

    @property
    def lam(self):
        n = self.time.n_t
        return (np.arange(n) + 0.5 - n / 2) * self.dlam

    @property
    def contour(self):
        return self.lam + 1j * self.eps

    def describe(self):
        return {"n_t": self.time.n_t, "t_ext": self.time.t_ext, "eps": self.eps}


WRAP_DAMPING = 40.0


def default_eps(tg):
    """Contour offset giving a wrap-around damping factor exp(-40)."""
    return WRAP_DAMPING / tg.t_ext


def adaptive_eps(tg, extended, n_phys):
    """Contour offset damping the wrap-around of the extension tail to exp(-40).

    A high-order continuation can exceed the data by many orders of
    magnitude; the offset grows with log(max|tail| / max|data|).
    """
    data = np.max(np.abs(extended[..., :n_phys])) if extended.size else 0.0
    tail = np.max(np.abs(extended[..., n_phys:])) if extended.size else 0.0
    ratio = tail / data if data > 0 else 1.0
    return (WRAP_DAMPING + np.log(max(1.0, ratio))) / tg.t_ext


def make_frequency_grid(tg, eps=None):
    return FrequencyGrid(tg, default_eps(tg) if eps is None else float(eps))


def _phase(n):
    k = np.arange(n)
    return np.where(k % 2, -1.0, 1.0) * np.exp(1j * np.pi * k / n)


def forward_transform(x, fg):
    """b_hat(lam_j + i eps) = dt * sum_k x_k exp(i (lam_j + i eps) t_k), along last axis."""
    tg = fg.time
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != tg.n_t:
        raise ConfigError("series length does not match the time grid")
    damped = x * np.exp(-fg.eps * tg.t)
    spec = tg.dt * tg.n_t * np.fft.ifft(damped * _phase(tg.n_t), axis=-1)
    # the shifted grid is symmetric: enforce c(-lam) = conj(c(lam)) exactly
    return 0.5 * (spec + np.conj(spec[..., ::-1]))


def inverse_at_negative_times(c, fg, n_steps):
    """(1/2pi) sum_j c_j exp(-i (lam_j + i eps) tau) dlam at tau = -m dt, m = 0..n_steps.

    Returns complex values ordered from tau = 0 down to tau = -n_steps*dt.
    """
    tg = fg.time
    n = tg.n_t
    m = np.arange(n_steps + 1)
    full = n * np.fft.ifft(c, axis=-1)
    vals = full[..., : n_steps + 1] * (np.where(m % 2, -1.0, 1.0) * np.exp(1j * np.pi * m / n))
    return vals * np.exp(-fg.eps * m * tg.dt) * fg.dlam / (2.0 * np.pi)


def inverse_transform(c, fg, tau):
    """Direct (slow) inverse transform at arbitrary times; reference path."""
    z = fg.contour
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    kern = np.exp(-1j * np.outer(tau, z))
    return (np.asarray(c) @ kern.T) * fg.dlam / (2.0 * np.pi)


def spectral_derivatives(c, fg, n_max):
    """d^n/dtau^n of the inverse transform at tau = 0 for n = 0..n_max.

    Returns ``(values, scales)`` of shape ``(..., n_max+1)``; ``scales`` is the
    absolutely summed magnitude (1/2pi) sum |c_j| |lam_j + i eps|^n dlam,
    an upper bound for the derivative used to normalise residuals.
    """
    z = fg.contour
    powers = (-1j * z)[None, :] ** np.arange(n_max + 1)[:, None]
    c = np.asarray(c)
    w = fg.dlam / (2.0 * np.pi)
    vals = (c @ powers.T) * w
    scales = (np.abs(c) @ np.abs(powers).T) * w
    return vals, scales


# ---------------------------------------------------------------------------
# data containers


@dataclass(eq=False)
class BoundaryData:
    """Samples b(t_k, theta_i) for t_k in the physical window [0, 1]."""

    sphere: SphereGrid
    time: TimeGrid
    values: np.ndarray  # (n_phys, n_nodes)
    t_quiet: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        want = (self.time.n_phys, self.sphere.size)
        if self.values.shape != want:
            raise ConfigError(f"boundary values have shape {self.values.shape}, expected {want}")

    def norm(self):
        """Discrete L2 norm over the cylinder (0,1] x S."""
        w = self.sphere.weights
        return float(np.sqrt(self.time.dt * np.sum(self.values ** 2 * w)))

    def scaled(self, alpha):
        return replace(self, values=alpha * self.values)


@dataclass(eq=False)
class HarmonicChannels:
    dim: int
    indices: list
    time: TimeGrid
    series: np.ndarray  # (n_channels, n_phys), physical window
    extended: np.ndarray = None  # (n_channels, n_t)
    spectra: np.ndarray = None  # (n_channels, n_t), complex
    freq: FrequencyGrid = None
    b_norm: float = field(default=None)

    @property
    def lmax(self):
        return max(l for l, _ in self.indices)

    def has_spectra(self):
        return self.spectra is not None

    def require_spectra(self):
        if self.spectra is None:
            raise StateError("channels carry no frequency spectra; run extend_and_transform first")

    def channel(self, l, m):
        return self.series[self.indices.index((l, m))]


def n_channels(d, lmax):
    return (lmax + 1) ** 2 if d == 3 else 2 * lmax + 1


def sh_analysis(b, lmax):
    """Project each time slice of ``b`` onto the real harmonics of degree <= lmax."""
    grid = b.sphere
    if 2 * lmax + 2 > grid.Q:
        raise CapacityError(f"lmax={lmax} needs Q >= {2 * lmax + 2}, grid has Q={grid.Q}")
    Y = special.harmonic_matrix(grid.dim, lmax, grid.nodes)
    coeffs = (Y * grid.weights) @ b.values.T
    return HarmonicChannels(
        dim=grid.dim,
        indices=special.harmonic_indices(grid.dim, lmax),
        time=b.time,
        series=coeffs,
        b_norm=b.norm(),
    )


def sh_synthesis(c, grid, t_quiet=0.0):
    if c.dim != grid.dim:
        raise ConfigError(f"channel dimension {c.dim} does not match grid dimension {grid.dim}")
    Y = special.harmonic_matrix(grid.dim, c.lmax, grid.nodes)
    return BoundaryData(grid, c.time, (c.series.T @ Y), t_quiet=t_quiet)


# ---------------------------------------------------------------------------
# extension beyond t = 1


def smooth_step(u):
    """C-infinity step: 1 for u <= 0, 0 for u >= 1, all derivatives vanish at both ends."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    out[u <= 0] = 1.0
    mid = (u > 0) & (u < 1)
    a = np.exp(-1.0 / (1.0 - u[mid]))
    b = np.exp(-1.0 / u[mid])
    out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class Extension:
    """Taylor continuation of the data at t = 1 cut off smoothly.

    ``order`` derivatives are matched at t=1 (estimated by a least-squares
    polynomial fit of degree ``fit_degree`` over the last ``fit_window`` time
    units); the polynomial is multiplied by a smooth step that falls from 1 at
    t=1 to 0 at t = 1 + ``width``.
    """

    order: int = 10
    width: float = 0.5
    fit_degree: int = 24
    fit_window: float = 0.1

    def endpoint_derivatives(self, x, tg):
        n = tg.n_phys
        if self.fit_degree < self.order:
            raise ConfigError("fit_degree must be at least the extension order")
        npts = max(int(round(self.fit_window / tg.dt)) + 1, self.fit_degree + 1)
        npts = min(npts, n)
        t = tg.t_phys[n - npts:]
        u = (t - 1.0) / self.fit_window
        with warnings.catch_warnings():
            # high degree on few points is intended; the fit is only read at u=0
            warnings.simplefilter("ignore", np.exceptions.RankWarning if hasattr(np, "exceptions") else np.RankWarning)
            coef = np.polynomial.legendre.legfit(u, np.asarray(x)[..., n - npts:].T, self.fit_degree)
        derivs = []
        for k in range(self.order + 1):
            ck = np.polynomial.legendre.legder(coef, k) if k else coef
            derivs.append(np.polynomial.legendre.legval(0.0, ck) / self.fit_window ** k)
        return np.array(derivs)  # (order+1, ...)

    def apply(self, x, tg):
        x = np.asarray(x, dtype=float)
        n = tg.n_phys
        if self.width > tg.t_ext - 1.0 - tg.dt:
            raise ConfigError("extension width does not fit inside the time horizon")
        out = np.zeros(x.shape[:-1] + (tg.n_t,))
        out[..., :n] = x
        t_tail = tg.t[n:]
        s = t_tail - 1.0
        D = self.endpoint_derivatives(x, tg)
        poly = np.zeros(x.shape[:-1] + (t_tail.size,))
        fact = 1.0
        for k in range(self.order + 1):
            if k:
                fact *= k
            poly = poly + D[k][..., None] * (s ** k / fact)
        out[..., n:] = poly * smooth_step(s / self.width)
        return out

    def describe(self):
        return {
            "kind": "taylor",
            "order": self.order,
            "width": self.width,
            "fit_degree": self.fit_degree,
            "fit_window": self.fit_window,
        }


@dataclass(frozen=True)
class HermiteExtension:
    """Cubic Hermite continuation (value and slope at t=1) times a smooth cutoff.

    Only C^1 at t=1; R_l^m on [-1, 0] is still extension independent, but the
    spectral derivatives at t=0 see the kink.  Kept as the second admissible
    extension for independence checks.
    """

    width: float = 1.5
    fit_degree: int = 6
    fit_window: float = 0.05

    def apply(self, x, tg):
        tay = Extension(order=1, width=self.width, fit_degree=self.fit_degree,
                        fit_window=self.fit_window)
        x = np.asarray(x, dtype=float)
        n = tg.n_phys
        if self.width > tg.t_ext - 1.0 - tg.dt:
            raise ConfigError("extension width does not fit inside the time horizon")
        D = tay.endpoint_derivatives(x, tg)
        out = np.zeros(x.shape[:-1] + (tg.n_t,))
        out[..., :n] = x
        s = (tg.t[n:] - 1.0) / self.width
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        herm = D[0][..., None] * h00 + D[1][..., None] * self.width * h10
        out[..., n:] = np.where(s < 1.0, herm, 0.0) * smooth_step(2.0 * s - 1.0)
        return out

    def describe(self):
        return {"kind": "hermite", "width": self.width, "fit_degree": self.fit_degree,
                "fit_window": self.fit_window}


DEFAULT_EXTENSION = Extension()

# Variants of comparable quality; the spread of d^n R(0) across them estimates
# how much of each derivative the sampled data actually determine.
ALTERNATE_EXTENSIONS = (
    Extension(fit_degree=16),
    Extension(order=8, fit_degree=20, fit_window=0.08),
    Extension(fit_degree=20, fit_window=0.15),
)


def extend_and_transform(c, extension=DEFAULT_EXTENSION, eps=None):
    """Extend each channel past t=1 and compute its spectrum on the shifted contour.

    With ``eps=None`` the contour offset is chosen by :func:`adaptive_eps`.
    """
    ext = extension.apply(c.series, c.time)
    if eps is None:
        eps = adaptive_eps(c.time, ext, c.time.n_phys)
    fg = make_frequency_grid(c.time, eps)
    spec = forward_transform(ext, fg)
    return replace(c, extended=ext, spectra=spec, freq=fg)
