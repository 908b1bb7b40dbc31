"""
Exterior-problem solution in channel form.

For each harmonic channel the Radon projections of the exterior solution are
functions R_l^m(t) of one variable.  They are obtained from the data spectrum
through the multiplier

    T_l(z) = 2^{d/2} pi^{d/2-1} (-i)^l / (z^{d-1} h_l^d(z)),     Re z > 0,

extended by T_l(-conj z) = conj T_l(z), which keeps R real for real data.
The inverse transform K_l of T_l is supported in t >= -1, so R_l^m on [-1, 0]
only depends on the data on [0, 1]:

    R_l^m(tau) = int_0^{1+tau} b_l^m(s) K_l(tau - s) ds.

For d = 3 the multiplier is e^{-iz} times a rational function and K_l has a
closed form (step plus decaying exponentials), used here as an oracle.
"""

import logging
import math
import threading
from dataclasses import dataclass

import numpy as np

from . import grids, special
from .errors import CapacityError, DomainError, StateError

log = logging.getLogger(__name__)

# largest degree for which the d=3 Hankel polynomial roots are trusted
L_POLE_MAX = 40
# exponential filter used only for displaying numeric kernels
FILTER_ALPHA = 36.0
FILTER_ORDER = 8
KERNEL_EPS = 16.0  # contour offset times T_ext for numeric kernels


def _multiplier_const(d):
    return 2.0 ** (d / 2) * math.pi ** (d / 2 - 1)


def transfer_values(d, l, lam):
    """T_l at arbitrary nonzero-real-part points (real or complex)."""
    z = np.asarray(lam, dtype=complex)
    if np.any(z.real == 0.0):
        raise DomainError("transfer function is evaluated off the imaginary axis only")
    right = z.real > 0
    zr = np.where(right, z, -np.conj(z))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        den = zr ** (d - 1) * special.sph_hankel(d, l, zr)
        val = _multiplier_const(d) * (-1j) ** l / den
    bad = ~np.isfinite(val)
    if np.any(bad):
        # |z^{d-1} h| overflowed: the true multiplier is ~ z^{l-1} -> 0 there
        log.warning("transfer function clamped to 0 at %d points (d=%d, l=%d)", int(bad.sum()), d, l)
        val = np.where(bad, 0.0, val)
    return np.where(right, val, np.conj(val))


@dataclass(frozen=True, eq=False)
class TransferFunction:
    dim: int
    degree: int
    points: np.ndarray
    values: np.ndarray

    def symmetry_residual(self):
        """max |T(-conj z) - conj T(z)| relative to max |T| (0 by construction)."""
        mirror = transfer_values(self.dim, self.degree, -np.conj(self.points))
        scale = np.max(np.abs(self.values)) or 1.0
        return float(np.max(np.abs(mirror - np.conj(self.values))) / scale)


def transfer_function(d, l, fg):
    """Multiplier T_l on a FrequencyGrid (its shifted contour) or at given points."""
    special._check_degree(l)
    special._check_dim(d)
    pts = fg.contour if isinstance(fg, grids.FrequencyGrid) else np.asarray(fg, dtype=complex)
    return TransferFunction(d, l, pts, transfer_values(d, l, pts))


class _KernelCache:
    """Transfer tables keyed by (d, l, n_t, t_ext, eps); single writer, many readers."""

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def get(self, d, l, fg):
        key = (d, l, fg.time.n_t, fg.time.t_ext, fg.eps)
        hit = self._data.get(key)
        if hit is not None:
            return hit
        with self._lock:
            if key not in self._data:
                vals = transfer_values(d, l, fg.contour)
                vals.setflags(write=False)
                self._data[key] = vals
            return self._data[key]

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


TRANSFER_CACHE = _KernelCache()


# ---------------------------------------------------------------------------
# channel functions


@dataclass(eq=False)
class ChannelFunctions:
    """R_l^m sampled on [-1, 0] plus spectral derivatives at t = 0.

    ``values`` has shape (n_channels, n_R) with ``t`` ascending from -1 to 0;
    ``derivs[:, n]`` is d^n R / dt^n at t = 0 and ``deriv_scales[:, n]`` the
    absolutely summed spectral magnitude of that derivative.
    ``deriv_uncertainty[:, n]`` bounds how much of ``derivs[:, n]`` the data
    do not determine: the larger of its change under the alternative
    extensions of :data:`htrw.grids.ALTERNATE_EXTENSIONS` and the contribution
    of the upper half of the frequency band (zeros when not computed).
    """

    dim: int
    indices: list
    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    deriv_scales: np.ndarray
    b_norm: float
    imag_residual: float = 0.0
    noise_gain: np.ndarray = None
    deriv_uncertainty: np.ndarray = None

    def __post_init__(self):
        if self.deriv_uncertainty is None:
            self.deriv_uncertainty = np.zeros_like(self.derivs)

    @property
    def n_max(self):
        return self.derivs.shape[1] - 1

    @property
    def lmax(self):
        return max(l for l, _ in self.indices)

    def row(self, l, m):
        try:
            return self.indices.index((l, m))
        except ValueError:
            raise DomainError(f"no channel ({l}, {m})") from None

    def channel(self, l, m):
        return self.values[self.row(l, m)]

    def support_residual(self):
        """max |R_l^m(-1)| over channels."""
        return float(np.max(np.abs(self.values[:, 0]))) if self.values.size else 0.0


def channel_coefficients(c):
    """T_l(z_j) b_l^m(z_j) for every channel (the spectra of R_l^m)."""
    c.require_spectra()
    fg = c.freq
    out = np.empty_like(c.spectra)
    for row, (l, _m) in enumerate(c.indices):
        out[row] = TRANSFER_CACHE.get(c.dim, l, fg) * c.spectra[row]
    return out


def derivative_spread(c, derivs, n_max, extensions):
    """max |d^n R(0) - derivs| over alternative extensions of the same channels."""
    spread = np.zeros_like(derivs)
    for ext in extensions:
        alt = grids.extend_and_transform(c, extension=ext)
        d, _s = grids.spectral_derivatives(channel_coefficients(alt), alt.freq, n_max)
        spread = np.maximum(spread, np.abs(d.real - derivs))
    return spread


def band_tail(coef, fg, n_max):
    """|d^n R(0)| carried by |lambda| > lambda_max / 2: an a-posteriori truncation estimate."""
    hi = np.abs(fg.lam) > 0.5 * np.max(np.abs(fg.lam))
    d, _s = grids.spectral_derivatives(coef * hi, fg, n_max)
    return np.abs(d.real)


def channel_response(c, n_max=8, alternates=None):
    """Channel functions R_l^m on [-1, 0] from harmonic channels with spectra.

    ``alternates`` (default :data:`htrw.grids.ALTERNATE_EXTENSIONS`; pass ``()``
    to skip) are re-run from the physical samples to estimate how far the
    derivatives at t = 0 depend on the unobservable continuation past t = 1;
    together with :func:`band_tail` they give ``deriv_uncertainty``.
    """
    if c.spectra is None or c.freq is None:
        raise StateError("channel_response needs spectra; run extend_and_transform first")
    fg = c.freq
    tg = fg.time
    if tg.t_ext < 2.0:
        raise DomainError("T_ext must be at least 2")
    coef = channel_coefficients(c)
    n_steps = int(round(1.0 / tg.dt))
    vals = grids.inverse_at_negative_times(coef, fg, n_steps)[..., ::-1]
    t = -tg.dt * np.arange(n_steps, -1, -1)
    d, s = grids.spectral_derivatives(coef, fg, n_max)
    # response of d^n R(0) to a unit perturbation of one data sample
    tmax = np.max([np.abs(TRANSFER_CACHE.get(c.dim, l, fg)) for l in sorted({l for l, _ in c.indices})], axis=0)
    powers = np.abs(fg.contour)[None, :] ** np.arange(n_max + 1)[:, None]
    gain = tg.dt * fg.dlam / (2.0 * np.pi) * (powers @ tmax)
    b_norm = c.b_norm if c.b_norm is not None else 0.0
    if alternates is None:
        alternates = grids.ALTERNATE_EXTENSIONS
    spread = None
    if alternates:
        spread = np.maximum(derivative_spread(c, d.real, n_max, alternates), band_tail(coef, fg, n_max))
    return ChannelFunctions(
        dim=c.dim,
        indices=list(c.indices),
        t=t,
        values=np.ascontiguousarray(vals.real),
        derivs=d.real,
        deriv_scales=s,
        b_norm=float(b_norm),
        imag_residual=float(np.max(np.abs(vals.imag))) if vals.size else 0.0,
        noise_gain=gain,
        deriv_uncertainty=spread,
    )


# ---------------------------------------------------------------------------
# kernels


def hankel_polynomial(l):
    """Coefficients (highest power first) of Q_l(z) = sum_k a_k (i/2)^k z^{l-k}.

    With a_k = (l+k)!/(k!(l-k)!), z^2 h_l^3(z) = sqrt(2/pi) (-i)^{l+1} e^{iz} z^{1-l} Q_l(z).
    """
    return np.array(
        [math.factorial(l + k) / (math.factorial(k) * math.factorial(l - k)) * (0.5j) ** k
         for k in range(l + 1)],
        dtype=complex,
    )


@dataclass(frozen=True, eq=False)
class KernelTable:
    """K_l either sampled (``t``, ``values``) or as a d=3 pole expansion.

    Pole form: K(t) = step + sum_k residues[k] exp(-i poles[k] (t+1)) for t > -1,
    and 0 for t < -1.
    """

    dim: int
    degree: int
    t: np.ndarray = None
    values: np.ndarray = None
    step: float = 0.0
    poles: np.ndarray = None
    residues: np.ndarray = None

    @property
    def is_exact(self):
        return self.poles is not None

    def __call__(self, t, right_limit=True):
        t = np.asarray(t, dtype=float)
        if self.is_exact:
            s = t + 1.0
            val = np.full(s.shape, self.step, dtype=complex)
            for p, r in zip(self.poles, self.residues):
                val = val + r * np.exp(-1j * p * s)
            on = s > 0 if not right_limit else s >= 0
            return np.where(on, val.real, 0.0)
        return np.interp(t, self.t, self.values, left=0.0, right=np.nan)


def kernel_pole_expansion(l):
    """Exact d=3 kernel: 2 pi times the residues of e^{-iz s} z^{l-1} / Q_l(z)."""
    special._check_degree(l)
    if l == 0:
        return KernelTable(3, 0, step=2.0 * math.pi, poles=np.zeros(0), residues=np.zeros(0))
    if l > L_POLE_MAX:
        raise CapacityError(f"pole expansion not supported for l={l} > {L_POLE_MAX}")
    q = hankel_polynomial(l)
    roots = np.roots(q)
    dq = np.polyder(q)
    # Newton polish and a residual check against the term magnitudes
    for _ in range(3):
        roots = roots - np.polyval(q, roots) / np.polyval(dq, roots)
    mag = np.polyval(np.abs(q), np.abs(roots))
    if np.any(np.abs(np.polyval(q, roots)) > 1e-10 * mag) or np.any(roots.imag >= 0):
        raise CapacityError(f"root finding for the degree-{l} Hankel polynomial failed")
    res = 2.0 * math.pi * roots ** (l - 1) / np.polyval(dq, roots)
    return KernelTable(3, l, step=0.0, poles=roots, residues=res)


def kernel_time_domain(d, l, tg=None, eps=None, t=None, exact=None):
    """K_l by numerical inverse transform of T_l on the frequency grid.

    The sum is smoothed by an exponential filter of order 8 so that the jump
    of K_l at t = -1 does not ring across the rest of the window.  Samples are
    returned at ``t`` (default: the grid times in [-(T_ext-1)/2 - 1, (T_ext-1)/2]).
    For d = 3, ``exact=True`` returns the pole expansion instead.
    """
    special._check_dim(d)
    special._check_degree(l)
    if exact:
        if d != 3:
            raise DomainError("the closed pole expansion exists for d=3 only")
        return kernel_pole_expansion(l)
    tg = tg or grids.TimeGrid()
    # the data-free kernel needs no tail damping; a small offset keeps e^{eps t} mild
    fg = grids.make_frequency_grid(tg, KERNEL_EPS / tg.t_ext if eps is None else eps)
    if t is None:
        half = 0.5 * (tg.t_ext - 1.0)
        k = np.arange(int(np.floor((-half - 1.0) / tg.dt)), int(np.floor(half / tg.dt)) + 1)
        t = k * tg.dt
    t = np.asarray(t, dtype=float)
    lam_max = np.max(np.abs(fg.lam))
    filt = np.exp(-FILTER_ALPHA * (np.abs(fg.lam) / lam_max) ** FILTER_ORDER)
    coef = TRANSFER_CACHE.get(d, l, fg) * filt
    vals = np.empty(t.size)
    for s in range(0, t.size, 512):
        vals[s:s + 512] = grids.inverse_transform(coef, fg, t[s:s + 512]).real
    return KernelTable(d, l, t=t, values=vals)


def _gregory_weights(n):
    """Weights for int over n equispaced points (unit spacing), 4th order when n >= 6."""
    if n <= 1:
        return np.zeros(n)
    if n < 6:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return w
    w = np.ones(n)
    ends = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
    w[:3] = ends
    w[-3:] = ends[::-1]
    return w


def convolve_channel(series, kernel, tg):
    """R(tau) = int_0^{1+tau} b(s) K(tau - s) ds for tau on the [-1, 0] grid.

    ``series`` holds b on the physical samples t = 0..1.  Only samples with
    s <= 1 + tau enter each value.
    """
    b = np.asarray(series, dtype=float)
    n = tg.n_phys
    if b.shape[-1] != n:
        raise DomainError("series must be sampled on the physical time window")
    lag = -1.0 + tg.dt * np.arange(n)  # tau - s for index difference k - j
    if kernel.is_exact:
        klag = kernel(lag, right_limit=True)
    else:
        klag = kernel(lag)
        # jump at -1: take the one-sided limit by quadratic extrapolation
        klag[0] = 3.0 * klag[1] - 3.0 * klag[2] + klag[3]
    out = np.zeros(b.shape[:-1] + (n,))
    for k in range(1, n):
        w = _gregory_weights(k + 1)
        # s_j = j dt, j = 0..k; K(tau_k - s_j) = klag[k - j]
        out[..., k] = tg.dt * np.sum(b[..., : k + 1] * klag[k::-1] * w, axis=-1)
    return out
