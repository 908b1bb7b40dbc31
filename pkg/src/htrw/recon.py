"""
Constructive inversion.

The channel functions give the Radon transform of f on one half of the
sinogram, F_l^m(p) = 2 R_l^m(-p) for p in [0, 1]; the other half follows from
evenness, F(w, -p) = F(-w, p).  The full sinogram is then inverted by filtered
backprojection (d=2) or by the local odd-dimensional formula

    f(x) = -1/(8 pi^2) int_{S^2} d^2/dp^2 F(w, x . w) dw        (d=3).
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import grids, special
from .errors import CapacityError, ConfigError
from .forward import Sinogram, eval_phantom

log = logging.getLogger(__name__)

N_P = 512
N_VOLUME = {2: 128, 3: 48}
# backprojection directions; the sinogram is synthesised there from its harmonics
Q_RECON = {2: 128, 3: 96}
ROLLOFF_START = 0.8  # fraction of Nyquist where the filter starts to roll off
TAPER_WIDTH = 0.05  # endpoint taper in p
_CHUNK = 8192


def make_pgrid(n_p=N_P):
    """Symmetric grid on [-1, 1] with n_p intervals (n_p even)."""
    if n_p < 4 or n_p % 2:
        raise ConfigError(f"N_p must be even and >= 4, got {n_p}")
    return np.linspace(-1.0, 1.0, n_p + 1)


def _check_symmetric(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 5:
        raise ConfigError("p grid must be one-dimensional with at least 5 nodes")
    if np.max(np.abs(p + p[::-1])) > 1e-12 or np.any(np.diff(p) <= 0):
        raise ConfigError("p grid must be ascending and symmetric about 0")
    if abs(p[-1] - 1.0) > 1e-12:
        raise ConfigError("p grid must span [-1, 1]")
    h = np.diff(p)
    if np.max(np.abs(h - h[0])) > 1e-10 * h[0] * p.size:
        raise ConfigError("p grid must be uniform")
    return p


@dataclass(frozen=True, eq=False)
class ReconVolume:
    """Reconstruction samples on the Cartesian grid ``axis``^d over [-1, 1]^d."""

    dim: int
    axis: np.ndarray
    values: np.ndarray

    @property
    def n(self):
        return self.axis.size

    def points(self):
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def ball_mask(self):
        return np.sum(self.points() ** 2, axis=-1) <= 1.0

    def outside_mean(self):
        """mean |f| over grid nodes outside the unit ball."""
        out = ~self.ball_mask()
        return float(np.mean(np.abs(self.values[out]))) if np.any(out) else 0.0

    def describe(self):
        return {"dimension": self.dim, "N": int(self.n)}


def volume_axis(n):
    if n < 2:
        raise ConfigError(f"volume size must be >= 2, got {n}")
    return np.linspace(-1.0, 1.0, n)


def sample_phantom(ph, n):
    axis = volume_axis(n)
    vol = ReconVolume(ph.dim, axis, np.zeros((n,) * ph.dim))
    return ReconVolume(ph.dim, axis, eval_phantom(ph, vol.points()))


# ---------------------------------------------------------------------------
# sinogram assembly


def assemble_sinogram(R, sg, p):
    """Full sinogram F(w, p) on the symmetric grid ``p`` from channel functions.

    F(w, p) = sum 2 R_l^m(-p) Y_l^m(w) for p >= 0 and F(w, -p) = F(-w, p).
    """
    p = _check_symmetric(p)
    if sg.dim != R.dim:
        raise ConfigError("sphere grid and channel functions have different dimensions")
    anti = sg.antipodes()
    half = p >= 0
    ph = p[half]
    # R is sampled on ascending t in [-1, 0]; F(p) = 2 R(-p)
    spline = CubicSpline(-R.t[::-1], 2.0 * R.values[:, ::-1], axis=-1)
    Fl = spline(ph)
    Y = special.harmonic_matrix(R.dim, R.lmax, sg.nodes)
    rows = [special.harmonic_indices(R.dim, R.lmax).index(lm) for lm in R.indices]
    Fpos = Y[rows].T @ Fl  # (n_nodes, n_half)
    vals = np.empty((sg.size, p.size))
    vals[:, half] = Fpos
    # mirror: F(w, -q) = F(-w, q); p[~half] are the negatives of ph[:0:-1] (or ph[::-1])
    neg = p[~half]
    j = np.searchsorted(ph, -neg[::-1])
    vals[:, ~half] = Fpos[anti][:, j][:, ::-1]
    return Sinogram(sg, p, vals)


def upsample_sinogram(F, Q, lmax=None):
    """Resample a sinogram onto the product grid with parameter ``Q``.

    F is projected onto harmonics of degree <= lmax (default: the largest the
    source grid resolves) and synthesised at the new directions.
    """
    src = F.sphere
    lmax = src.max_lmax if lmax is None else int(lmax)
    if 2 * lmax + 2 > src.Q:
        raise CapacityError(f"lmax={lmax} needs Q >= {2 * lmax + 2}, grid has Q={src.Q}")
    sg = grids.make_sphere_grid(src.dim, Q)
    Ya = special.harmonic_matrix(src.dim, lmax, src.nodes)
    Yb = special.harmonic_matrix(src.dim, lmax, sg.nodes)
    return Sinogram(sg, F.p, Yb.T @ ((Ya * src.weights) @ F.values))


# ---------------------------------------------------------------------------
# inversion


def _rolloff(sigma, sigma_nyq, start=ROLLOFF_START):
    """1 below start * Nyquist, raised cosine to 0 at Nyquist."""
    u = np.clip((np.abs(sigma) / sigma_nyq - start) / (1.0 - start), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * u))


def _taper(p, width=TAPER_WIDTH):
    u = np.clip((1.0 - np.abs(p)) / width, 0.0, 1.0)
    return np.where(u >= 1.0, 1.0, 0.5 * (1.0 - np.cos(np.pi * u)))


def _ramp(n_fft, h):
    """Discrete ramp |sigma| from the band-limited spatial kernel.

    Sampling |sigma| directly on the DFT grid leaves a DC bias from the
    periodic wrap of the slowly decaying kernel; the spatial form does not.
    """
    k = np.fft.fftfreq(n_fft, d=1.0 / n_fft).astype(int)
    ker = np.zeros(n_fft)
    ker[0] = 0.25 / h ** 2
    odd = k % 2 == 1
    ker[odd] = -1.0 / (np.pi * k[odd] * h) ** 2
    return 2.0 * np.pi * h * np.fft.rfft(ker).real


def filter_sinogram(F):
    """Filtered projections ``(q, G)`` ready for backprojection.

    d=2: ramp |sigma| with roll-off and 1/(4 pi), by linear convolution so that
    G is also available on |q| > 1 (the ramp is non-local; corners of the
    output cube reach |x . w| = sqrt(2)).  d=3: spectral second derivative
    with roll-off times -1/(8 pi^2), zero outside [-1, 1].  Both include the
    endpoint taper.
    """
    p = _check_symmetric(F.p)
    h = p[1] - p[0]
    x = F.values * _taper(p)
    n = p.size
    d = F.sphere.dim
    n_ext = int(np.ceil((np.sqrt(d) - 1.0) / h)) + 2
    q = p[0] + h * np.arange(-n_ext, n + n_ext)
    if d == 2:
        n_fft = int(2 ** np.ceil(np.log2(2 * (n + 2 * n_ext))))  # no circular wrap
        sigma = 2.0 * np.pi * np.fft.rfftfreq(n_fft, d=h)
        filt = _ramp(n_fft, h) * _rolloff(sigma, np.pi / h) / (4.0 * np.pi)
        buf = np.zeros((x.shape[0], n_fft))
        buf[:, n_ext:n_ext + n] = x
        G = np.fft.irfft(np.fft.rfft(buf, axis=1) * filt, n_fft, axis=1)[:, :q.size]
    else:
        # periodic on [-1, 1): F vanishes near both ends
        m = n - 1
        sigma = 2.0 * np.pi * np.fft.rfftfreq(m, d=h)
        filt = -(sigma ** 2) * _rolloff(sigma, np.pi / h) * (-1.0 / (8.0 * np.pi ** 2))
        G = np.zeros((x.shape[0], q.size))
        G[:, n_ext:n_ext + m] = np.fft.irfft(np.fft.rfft(x[:, :m], axis=1) * filt, m, axis=1)
        G[:, n_ext + m] = G[:, n_ext]
    return q, G


def _cubic_coefficients(p, G):
    """Interpolating cubic per row: coefficients (4, n_rows, n_p - 1)."""
    return np.ascontiguousarray(np.moveaxis(CubicSpline(p, G, axis=1).c, 2, 1))


def _backproject_chunk(pts, nodes, weights, coef, p0, h, n_int):
    out = np.zeros(pts.shape[0])
    for k in range(nodes.shape[0]):
        s = pts @ nodes[k]
        u = (s - p0) / h
        i = np.clip(np.floor(u).astype(np.intp), 0, n_int - 1)
        dx = (u - i) * h
        c = coef[:, k]
        val = ((c[0, i] * dx + c[1, i]) * dx + c[2, i]) * dx + c[3, i]
        val[(s < p0) | (s > p0 + n_int * h)] = 0.0
        out += weights[k] * val
    return out


def default_threads():
    env = os.environ.get("HTRW_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"HTRW_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"HTRW_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def invert_radon(F, n=None, threads=None):
    """Invert a full sinogram on [-1, 1] onto an n^d Cartesian grid.

    Each output point sums over directions in a fixed order, so the result
    does not depend on ``threads``.
    """
    p = _check_symmetric(F.p)
    d = F.sphere.dim
    n = N_VOLUME[d] if n is None else int(n)
    axis = volume_axis(n)
    q, G = filter_sinogram(F)
    coef = _cubic_coefficients(q, G)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    nodes = np.asarray(F.sphere.nodes)
    weights = np.asarray(F.sphere.weights)
    h = q[1] - q[0]
    chunks = [slice(i, min(i + _CHUNK, pts.shape[0])) for i in range(0, pts.shape[0], _CHUNK)]
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")

    def work(sl):
        return _backproject_chunk(pts[sl], nodes, weights, coef, q[0], h, q.size - 1)

    if threads == 1 or len(chunks) == 1:
        parts = [work(sl) for sl in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    vals = np.concatenate(parts).reshape((n,) * d)
    return ReconVolume(d, axis, vals)


def l2_error(vol, ph):
    """Relative L2 error of a reconstruction over grid nodes in the unit ball."""
    if vol.dim != ph.dim:
        raise ConfigError("volume and phantom dimensions differ")
    mask = vol.ball_mask()
    truth = eval_phantom(ph, vol.points()[mask])
    den = np.linalg.norm(truth)
    num = np.linalg.norm(vol.values[mask] - truth)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


def reconstruct(R, n=None, n_p=N_P, q_recon=None, threads=None):
    """Channel functions -> full sinogram on the backprojection grid -> volume."""
    q_recon = Q_RECON[R.dim] if q_recon is None else int(q_recon)
    sg = grids.make_sphere_grid(R.dim, q_recon)
    F = assemble_sinogram(R, sg, make_pgrid(n_p))
    return invert_radon(F, n=n, threads=threads)
