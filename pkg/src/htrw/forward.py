"""
Forward model: bump phantoms, spherical means, boundary wave data g = A f on
the half-time cylinder (0,1] x S, Radon transforms of phantoms and the
d'Alembert propagation of Radon projections.

Every quantity is computed from the analytic phantom.  For a single radial
bump the spherical mean over a sphere of radius r centred at distance D from
the bump centre only depends on the angle alpha between the sphere direction
and the axis through the centre, with |x - c|^2 = D^2 + r^2 + 2 r D cos(alpha),
so all surface integrals reduce to one-dimensional Gauss-Legendre rules over
the arc of alpha that meets the bump.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DomainError
from .grids import BoundaryData, SphereGrid

N_ARC = 96
N_ABEL = 96


def bump_profile(s):
    """phi(s) = exp(1 - 1/(1 - s^2)) for |s| < 1, else 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_profile_deriv(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * si / (q * q))
    return out


@dataclass(frozen=True, eq=False)
class Phantom:
    dim: int
    centers: np.ndarray
    radii: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.atleast_1d(np.asarray(self.radii, dtype=float))
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        object.__setattr__(self, "centers", c.reshape(-1, self.dim) if c.size else np.zeros((0, self.dim)))
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "amplitudes", a)
        if self.dim not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dim}")
        if not (len(self.centers) == len(self.radii) == len(self.amplitudes)):
            raise ConfigError("centers, radii and amplitudes must have equal length")
        for i, (c, rho) in enumerate(zip(self.centers, self.radii)):
            if rho <= 0:
                raise DomainError(f"bump {i}: radius must be positive")
            if np.linalg.norm(c) + rho >= 1.0:
                raise DomainError(
                    f"bump {i}: |c| + rho = {np.linalg.norm(c) + rho:g} must be < 1"
                )

    @classmethod
    def single(cls, center, radius, amplitude=1.0):
        center = np.asarray(center, dtype=float)
        return cls(center.size, center[None, :], [radius], [amplitude])

    @classmethod
    def empty(cls, dim):
        return cls(dim, np.zeros((0, dim)), [], [])

    @property
    def n_bumps(self):
        return len(self.radii)

    def bumps(self):
        return zip(self.centers, self.radii, self.amplitudes)

    @property
    def support_radius(self):
        if not self.n_bumps:
            return 0.0
        return float(max(np.linalg.norm(c) + r for c, r, _ in self.bumps()))

    @property
    def delta_s(self):
        """Distance from the support to the unit sphere."""
        return 1.0 - self.support_radius

    def scaled(self, alpha):
        return Phantom(self.dim, self.centers, self.radii, alpha * self.amplitudes)

    def describe(self):
        return {
            "dimension": self.dim,
            "bumps": [
                {"center": c.tolist(), "radius": float(r), "amplitude": float(a)}
                for c, r, a in self.bumps()
            ],
        }


def eval_phantom(ph, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for c, rho, a in ph.bumps():
        out += a * bump_profile(np.linalg.norm(x - c, axis=-1) / rho)
    return out


# ---------------------------------------------------------------------------
# spherical means


def _arc_rule(D, r, rho, n):
    """Gauss-Legendre nodes in alpha over the arc where |x - c| < rho.

    D and r broadcast; returns (alpha, weights, mask) with trailing node axis.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    rD = r * D
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (rho * rho - D * D - r * r) / (2.0 * rD)
    # cos(alpha) < kappa inside the bump
    active = (np.abs(D - r) < rho) & (rD > 0)
    lo = np.arccos(np.clip(kappa, -1.0, 1.0))
    lo = np.where(active, lo, np.pi)
    half = 0.5 * (np.pi - lo)
    alpha = lo[..., None] + half[..., None] * (x + 1.0)
    weights = half[..., None] * w
    return alpha, weights, active


def _radial_mean(d, D, r, rho, deriv=False, n=N_ARC):
    """Spherical mean (or its r-derivative) of phi(|x-c|/rho) for |theta - c| = D."""
    D, r = np.broadcast_arrays(np.asarray(D, float), np.asarray(r, float))
    alpha, w, active = _arc_rule(D, r, rho, n)
    ca = np.cos(alpha)
    s = np.sqrt(np.maximum(D[..., None] ** 2 + r[..., None] ** 2 + 2.0 * r[..., None] * D[..., None] * ca, 0.0))
    if deriv:
        with np.errstate(divide="ignore", invalid="ignore"):
            ds = np.where(s > 0, (r[..., None] + D[..., None] * ca) / s, 0.0)
        f = bump_profile_deriv(s / rho) * ds / rho
    else:
        f = bump_profile(s / rho)
    if d == 3:
        val = 2.0 * np.pi * np.sum(f * np.sin(alpha) * w, axis=-1)
    else:
        val = 2.0 * np.sum(f * w, axis=-1)
    # degenerate spheres (r = 0 or centred on the bump axis point)
    degen = (r * D == 0)
    if np.any(degen):
        area = 4.0 * np.pi if d == 3 else 2.0 * np.pi
        s0 = np.abs(D - r) if not deriv else None
        if deriv:
            val = np.where(degen, 0.0, val)
        else:
            val = np.where(degen, area * bump_profile(np.sqrt(D * D + r * r) / rho), val)
    return np.where(active | degen, val, 0.0)


@dataclass(eq=False)
class MeansTable:
    sphere: SphereGrid
    radii: np.ndarray
    values: np.ndarray  # (n_r, n_nodes)


def spherical_means(ph, centers, radii, deriv=False):
    """M(r, theta) = int_S f(theta + r tau) dtau for theta on ``centers``."""
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 0):
        raise DomainError("radii must be nonnegative")
    nodes = centers.nodes if isinstance(centers, SphereGrid) else np.atleast_2d(centers)
    out = np.zeros((radii.size, nodes.shape[0]))
    for c, rho, a in ph.bumps():
        D = np.linalg.norm(nodes - c, axis=1)
        out += a * _radial_mean(ph.dim, D[None, :], radii[:, None], rho, deriv=deriv)
    if isinstance(centers, SphereGrid):
        return MeansTable(centers, radii, out)
    return out


def _frame(axis):
    """Orthonormal completion (u, v) of a unit 3-vector."""
    a = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, a)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def spherical_means_sphere_quadrature(ph, theta, r, n_polar=64):
    """Reference spherical mean by direct quadrature of f over the sphere |x - theta| = r.

    Each bump is integrated over the cap (d=3) or arc (d=2) of the sphere that
    meets its support: Gauss-Legendre in the angle from the direction of the
    bump centre, trapezoid in azimuth, f evaluated at the 3D (2D) points.
    """
    theta = np.asarray(theta, float)
    xg, wg = np.polynomial.legendre.leggauss(n_polar)
    total = 0.0
    for c, rho, a in ph.bumps():
        one = Phantom.single(c, rho, a)
        if r == 0:
            area = 2 * np.pi if ph.dim == 2 else 4 * np.pi
            total += area * float(eval_phantom(one, theta))
            continue
        D = float(np.linalg.norm(c - theta))
        axis = (c - theta) / D if D > 0 else np.eye(ph.dim)[0]
        cmin = (D * D + r * r - rho * rho) / (2 * D * r) if D > 0 else (1.0 if r >= rho else -1.0)
        if cmin >= 1.0:
            continue
        amax = np.pi if cmin <= -1.0 else float(np.arccos(cmin))
        if ph.dim == 2:
            alpha = amax * xg
            perp = np.array([-axis[1], axis[0]])
            pts = theta + r * (np.cos(alpha)[:, None] * axis + np.sin(alpha)[:, None] * perp)
            total += float(np.sum(eval_phantom(one, pts) * amax * wg))
        else:
            alpha = 0.5 * amax * (xg + 1.0)
            n_az = 2 * n_polar
            beta = 2 * np.pi * np.arange(n_az) / n_az
            u, v = _frame(axis)
            ring = np.cos(beta)[:, None] * u + np.sin(beta)[:, None] * v
            pts = theta + r * (np.cos(alpha)[:, None, None] * axis + np.sin(alpha)[:, None, None] * ring[None])
            w = 0.5 * amax * wg * np.sin(alpha) * (2 * np.pi / n_az)
            total += float(np.sum(eval_phantom(one, pts).sum(axis=1) * w))
    return total


# ---------------------------------------------------------------------------
# wave data


def _g3(D, t, rho):
    # (1/4pi) d/dt [t M(t)] in closed form for one bump
    return (
        (D + t) * bump_profile((D + t) / rho) - (t - D) * bump_profile(np.abs(t - D) / rho)
    ) / (2.0 * D)


_G2_CHUNK = 2048


def _g2(D, t, rho, n=N_ABEL):
    """d/dt int_0^t M(r) r / (2 pi sqrt(t^2 - r^2)) dr with r = t sin(psi)."""
    D, t = np.broadcast_arrays(np.asarray(D, float), np.asarray(t, float))
    out = np.zeros(D.shape)
    lo_r = np.maximum(D - rho, 0.0)
    ok = (t > lo_r) & (t > 0)
    if not np.any(ok):
        return out
    Dk, tk = D[ok], t[ok]
    psi_lo = np.arcsin(np.clip(lo_r[ok] / tk, 0.0, 1.0))
    psi_hi = np.arcsin(np.clip((Dk + rho) / tk, 0.0, 1.0))
    x, w = np.polynomial.legendre.leggauss(n)
    res = np.empty(Dk.size)
    # chunked: the arc rule adds another quadrature axis
    for s in range(0, Dk.size, _G2_CHUNK):
        sl = slice(s, s + _G2_CHUNK)
        half = 0.5 * (psi_hi[sl] - psi_lo[sl])
        psi = psi_lo[sl, None] + half[:, None] * (x + 1.0)
        sp = np.sin(psi)
        r = tk[sl, None] * sp
        M = _radial_mean(2, Dk[sl, None], r, rho)
        dM = _radial_mean(2, Dk[sl, None], r, rho, deriv=True)
        res[sl] = np.sum((M + r * dM) * sp * half[:, None] * w, axis=1)
    out[ok] = res / (2.0 * np.pi)
    return out


def wave_data(ph, tg, sg):
    """Boundary trace g(t, theta) of the free-space wave with u(0) = f, u_t(0) = 0."""
    if ph.dim != sg.dim:
        raise ConfigError("phantom and sphere grid dimensions differ")
    t = tg.t_phys
    vals = np.zeros((t.size, sg.size))
    for c, rho, a in ph.bumps():
        D = np.linalg.norm(sg.nodes - c, axis=1)
        if ph.dim == 3:
            vals += a * _g3(D[None, :], t[:, None], rho)
        else:
            vals += a * _g2(D[None, :], t[:, None], rho)
    t_quiet = ph.delta_s if ph.n_bumps else 1.0
    return BoundaryData(sg, tg, vals, t_quiet=t_quiet)


def wave_data_from_means(ph, tg, sg, oversample=4):
    """Independent d=3 route: (1/4pi) d/dt [t M(t)] by 4th-order differences of a means table."""
    if ph.dim != 3:
        raise ConfigError("the means-table route is implemented for d=3")
    h = tg.dt / oversample
    t = tg.t_phys
    out = np.zeros((t.size, sg.size))
    for k, coef in zip((-2, -1, 1, 2), (1.0, -8.0, 8.0, -1.0)):
        tk = t + k * h
        M = spherical_means(ph, sg, np.abs(tk)).values
        out += coef * (tk[:, None] * M)
    return BoundaryData(sg, tg, out / (12.0 * h) / (4.0 * np.pi), t_quiet=ph.delta_s)


def kirchhoff_point(ph, theta, t, n_polar=96):
    """Pressure at (t, theta) from the d=3 Kirchhoff formula with a brute-force sphere rule."""
    h = 1e-4
    vals = [
        (t + k * h) * spherical_means_sphere_quadrature(ph, theta, t + k * h, n_polar)
        for k in (-2, -1, 1, 2)
    ]
    deriv = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12.0 * h)
    return deriv / (4.0 * np.pi)


# ---------------------------------------------------------------------------
# Radon transform


@dataclass(eq=False)
class Sinogram:
    sphere: SphereGrid
    p: np.ndarray
    values: np.ndarray  # (n_nodes, n_p)

    @property
    def is_full(self):
        return self.p[0] < 0

    def norm(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _radial_radon(d, q, rho, n=64):
    """Integral of phi(|x|/rho) over the plane at signed distance q from the centre."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape)
    inside = np.abs(q) < rho
    if not np.any(inside):
        return out
    qi = q[inside]
    umax = np.sqrt(rho * rho - qi * qi)
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * umax[:, None] * (x + 1.0)
    wts = 0.5 * umax[:, None] * w
    f = bump_profile(np.sqrt(qi[:, None] ** 2 + u * u) / rho)
    if d == 2:
        out[inside] = 2.0 * np.sum(f * wts, axis=1)
    else:
        out[inside] = 2.0 * np.pi * np.sum(f * u * wts, axis=1)
    return out


def radon_of_phantom(ph, sg, p):
    """F(omega, p) = integral of f over the plane x . omega = p."""
    if ph.dim != sg.dim:
        raise ConfigError("phantom and sphere grid dimensions differ")
    p = np.asarray(p, dtype=float)
    vals = np.zeros((sg.size, p.size))
    for c, rho, a in ph.bumps():
        q = p[None, :] - (sg.nodes @ c)[:, None]
        vals += a * _radial_radon(ph.dim, q, rho)
    return Sinogram(sg, p, vals)


def radon_plane_quadrature(ph, omega, p, n=80):
    """Reference d=3 plane integral: polar Gauss rule over each bump's section disk."""
    omega = np.asarray(omega, float)
    e1, e2 = _frame(omega)
    xg, wg = np.polynomial.legendre.leggauss(n)
    n_az = 2 * n
    beta = 2 * np.pi * np.arange(n_az) / n_az
    ring = np.cos(beta)[:, None] * e1 + np.sin(beta)[:, None] * e2
    total = 0.0
    for c, rho, a in ph.bumps():
        q = p - float(c @ omega)
        if abs(q) >= rho:
            continue
        smax = np.sqrt(rho * rho - q * q)
        s = 0.5 * smax * (xg + 1.0)
        foot = c + q * omega
        pts = foot + s[:, None, None] * ring[None]
        vals = eval_phantom(Phantom.single(c, rho, a), pts).sum(axis=1)
        total += float(np.sum(vals * s * 0.5 * smax * wg) * 2 * np.pi / n_az)
    return total


def dalembert_projection(F, t, omega_index, p):
    """[Ru](t, omega, p) = (F(omega, p + t) + F(omega, p - t)) / 2 from a full sinogram."""
    if not F.is_full:
        raise ConfigError("d'Alembert projection needs a full sinogram on [-1, 1]")
    spline = CubicSpline(F.p, F.values[omega_index])
    p = np.asarray(p, dtype=float)

    def val(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= F.p[0]) & (x <= F.p[-1])
        return np.where(inside, spline(np.clip(x, F.p[0], F.p[-1])), 0.0)

    return 0.5 * (val(p + t) + val(p - t))
