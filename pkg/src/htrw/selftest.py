"""
Invariant suites behind ``htrw selftest``.

Each suite returns a :class:`SuiteResult` with the worst observed residual
and its tolerance.  ``quick=True`` restricts every suite to degrees l <= 8.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import exterior, forward, grids, special


@dataclass
class SuiteResult:
    name: str
    worst: float
    tol: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.worst) and self.worst <= self.tol)


def _timed(fn):
    def run(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def wronskian_suite(quick=False):
    """Wronskian residual over lambda in [0.5, 100] (50 log-spaced points)."""
    lam = np.logspace(np.log10(0.5), 2.0, 50)
    worst, where = 0.0, ""
    for d in special.DIMENSIONS:
        for l in range(9 if quick else 33):
            try:
                r = float(np.max(special.wronskian_residual(d, l, lam)))
            except (ArithmeticError, ValueError):
                r = np.inf
            if not r <= worst:  # also catches nan
                worst, where = r, f"d={d} l={l}"
    return SuiteResult("wronskian", worst, 1e-8, detail=where)


@_timed
def jacobi_anger_suite(quick=False):
    """Plane-wave projection identity for l <= 8, lambda in {1, 5, 20}."""
    worst, where = 0.0, ""
    for d in special.DIMENSIONS:
        grid = grids.make_sphere_grid(d, 64)
        for l in range(5 if quick else 9):
            for m in [m for ll, m in special.harmonic_indices(d, l) if ll == l]:
                for lam in (1.0, 5.0, 20.0):
                    r = special.jacobi_anger_residual(d, l, m, lam, grid)
                    if not r <= worst:
                        worst, where = r, f"d={d} l={l} m={m} lam={lam}"
    return SuiteResult("jacobi-anger", worst, 1e-7, detail=where)


@_timed
def gram_suite(quick=False):
    """Entrywise deviation of the discrete Gram matrix from the identity."""
    worst = 0.0
    for d in special.DIMENSIONS:
        for Q in ((16, 32) if quick else (16, 32, 64)):
            g = grids.make_sphere_grid(d, Q)
            Y = special.harmonic_matrix(d, g.max_lmax, g.nodes)
            G = (Y * g.weights) @ Y.T
            worst = max(worst, float(np.max(np.abs(G - np.eye(len(G))))))
    return SuiteResult("gram", worst, 1e-10)


def kernel_support_residual(d, l, tg=None):
    """max |K_l(t)| over t in [-3, -1.1] relative to max |K_l| (numerical kernel)."""
    tg = tg or grids.TimeGrid()
    t = np.arange(int(np.ceil(-3.0 / tg.dt)), int(np.floor(1.0 / tg.dt)) + 1) * tg.dt
    K = exterior.kernel_time_domain(d, l, tg, t=t)
    msk = (t >= -3.0) & (t <= -1.1)
    return float(np.max(np.abs(K.values[msk])) / np.max(np.abs(K.values)))


@_timed
def kernel_support_suite(quick=False):
    """Numerical kernels vanish before t = -1; the d=3 pole form vanishes exactly."""
    worst, where = 0.0, ""
    for d in special.DIMENSIONS:
        for l in range(9):
            r = kernel_support_residual(d, l)
            if not r <= worst:
                worst, where = r, f"d={d} l={l}"
    for l in range(9):
        K = exterior.kernel_pole_expansion(l)
        r = float(np.max(np.abs(K(np.linspace(-3.0, -1.0 - 1e-12, 200)))))
        if not r <= worst:
            worst, where = r, f"pole form l={l}"
    return SuiteResult("kernel-support", worst, 1e-5, detail=where)


def reference_phantom(d):
    return forward.Phantom.single([0.3] + [0.0] * (d - 1), 0.4)


def _reference_channels(d, lmax):
    tg = grids.TimeGrid()
    b = forward.wave_data(reference_phantom(d), tg, grids.make_sphere_grid(d, 32))
    return b, grids.sh_analysis(b, lmax)


@_timed
def extension_suite(quick=False):
    """R_l^m on [-1, 0] for the Taylor and Hermite extensions, relative to ||b||."""
    worst, where = 0.0, ""
    for d in special.DIMENSIONS:
        b, ch = _reference_channels(d, 8 if quick else 12)
        Ra = exterior.channel_response(grids.extend_and_transform(ch), alternates=())
        Rb = exterior.channel_response(grids.extend_and_transform(ch, extension=grids.HermiteExtension()), alternates=())
        r = float(np.max(np.abs(Ra.values - Rb.values)) / b.norm())
        if not r <= worst:
            worst, where = r, f"d={d}"
    return SuiteResult("extension-independence", worst, 1e-6, detail=where)


@_timed
def two_path_suite(quick=False):
    """Frequency-domain channels against time-domain convolution (d=3, l <= 8)."""
    tg = grids.TimeGrid()
    b, ch = _reference_channels(3, 8)
    R = exterior.channel_response(grids.extend_and_transform(ch), alternates=())
    worst, where = 0.0, ""
    for l in range(9):
        rows = [r for r, (ll, _m) in enumerate(R.indices) if ll == l]
        Rc = exterior.convolve_channel(ch.series[rows][:, : tg.n_phys], exterior.kernel_pole_expansion(l), tg)
        r = float(np.max(np.abs(Rc - R.values[rows])) / b.norm())
        if not r <= worst:
            worst, where = r, f"l={l}"
    return SuiteResult("two-path", worst, 1e-6, detail=where)


SUITES = (wronskian_suite, jacobi_anger_suite, gram_suite, kernel_support_suite, extension_suite, two_path_suite)


def run_all(quick=False, suites=SUITES):
    return [s(quick=quick) for s in suites]


def format_table(results):
    lines = [f"{'suite':<24} {'worst':>10} {'tol':>8}  status   time"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f"  ({r.detail})" if r.detail else ""
        lines.append(f"{r.name:<24} {r.worst:10.2e} {r.tol:8.0e}  {status:<6} {r.seconds:5.1f}s{extra}")
    return "\n".join(lines)
