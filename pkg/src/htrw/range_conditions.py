"""
Range conditions and verdicts.

Half-time wave data are in range iff every channel function satisfies

* moment conditions: int_0^1 F_l^m(p) p^n dp = 0 for l > n, l + n even;
* smoothness at p = 0: d^n F_l^m(0) = 0 for l + n odd,

with F_l^m(p) = 2 R_l^m(-p).  The same families are checked for half-range
sinograms, and the classical conditions (evenness, moment projections) for
full-range sinograms.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import special
from .errors import ConfigError, FormatError

REPORT_VERSION = 1
THETA_PASS = 1e-3
THETA_FAIL = 1e-1
FLOOR_REL = 1e-12
IN_RANGE = "in-range"
OUT_OF_RANGE = "out-of-range"
INCONCLUSIVE = "inconclusive"

# Gauss-Legendre panels for the moment integrals
N_PANELS = 16
N_GAUSS = 16
# alternate one-sided fits (window, degree); their spread bounds the part of
# d^n F(0) not determined by the samples
HALF_RANGE_FITS = ((0.05, None), (0.15, None), (None, 8), (None, 14))


def _gauss_panels(n_panels=N_PANELS, n_gauss=N_GAUSS):
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1.0)).ravel()
    wts = (0.5 * h[:, None] * w).ravel()
    return nodes, wts


def moment_conditions(lmax, n_max):
    """(l, n) pairs with l > n and l + n even."""
    return [(l, n) for l in range(lmax + 1) for n in range(min(n_max, l - 1) + 1) if (l + n) % 2 == 0]


def smoothness_conditions(lmax, deriv_max):
    """(l, n) pairs with l + n odd."""
    return [(l, n) for l in range(lmax + 1) for n in range(deriv_max + 1) if (l + n) % 2 == 1]


def _moment_table(indices, p, F, n_max, floor):
    """|int_0^1 F(p) p^n dp| / (max|F| + floor) from samples F on ascending p in [0, 1]."""
    x, w = _gauss_panels()
    vals = CubicSpline(p, F, axis=-1)(x)
    sup = np.max(np.abs(F), axis=-1)
    rows = []
    for r, (l, m) in enumerate(indices):
        for n in range(min(n_max, l - 1) + 1):
            if (l + n) % 2:
                continue
            raw = abs(float(np.sum(vals[r] * x ** n * w)))
            den = sup[r] + floor
            rows.append((l, m, n, raw / den if den > 0 else 0.0))
    return rows


def moment_residuals(R, n_max=8):
    """Moment residuals of channel functions; list of (l, m, n, value).

    Each entry is |int_0^1 R_l^m(-p) p^n dp| / (max|R_l^m| + 1e-12 ||b||).
    """
    p = -R.t[::-1]
    F = R.values[:, ::-1]
    return _moment_table(R.indices, p, F, n_max, FLOOR_REL * R.b_norm)


def smoothness_table(R, deriv_max=8):
    """Parity entries d^n F_l^m(0), l + n odd, with their uncertainty and scale.

    Returns a list of (l, m, n, raw, uncertainty, scale) where ``raw`` is
    |d^n R_l^m(0)| (the factor 2 and the sign (-1)^n of F(p) = 2 R(-p) cancel
    in every ratio), ``uncertainty`` its spread over alternative extensions
    past t = 1, and ``scale`` = max|R_l^m| + 1e-12 ||b|| g_n / g_0 with g_n the
    response of the n-th derivative to one data sample (the value floor
    carried through differentiation).
    """
    if R.n_max < deriv_max:
        raise ConfigError(f"channel functions carry derivatives up to {R.n_max} < {deriv_max}")
    gain = R.noise_gain if R.noise_gain is not None else np.ones(R.n_max + 1)
    gain = gain / gain[0] if gain[0] > 0 else np.ones_like(gain)
    sup = np.max(np.abs(R.values), axis=-1) if R.values.size else np.zeros(len(R.indices))
    rows = []
    for r, (l, m) in enumerate(R.indices):
        for n in range(deriv_max + 1):
            if (l + n) % 2 == 0:
                continue
            scale = sup[r] + FLOOR_REL * R.b_norm * gain[n]
            rows.append((l, m, n, abs(float(R.derivs[r, n])), float(R.deriv_uncertainty[r, n]), float(scale)))
    return rows


def smoothness_residuals(R, deriv_max=8):
    """Parity residuals of d^n F_l^m(0), F(p) = 2 R(-p); list of (l, m, n, value).

    value = max(0, raw - uncertainty) / scale from :func:`smoothness_table`:
    only the part of a parity-violating derivative that the data determine
    (beyond its dependence on the continuation past t = 1) counts.
    """
    rows = []
    for l, m, n, raw, unc, scale in smoothness_table(R, deriv_max):
        rows.append((l, m, n, max(0.0, raw - unc) / scale if scale > 0 else 0.0))
    return rows


# ---------------------------------------------------------------------------
# Radon sinograms


def _project(sino, lmax):
    grid = sino.sphere
    Y = special.harmonic_matrix(grid.dim, lmax, grid.nodes)
    return special.harmonic_indices(grid.dim, lmax), (Y * grid.weights) @ sino.values


def radon_full_range_residuals(F, n_max=8, lmax=12):
    """Classical range conditions for a sinogram on p in [-1, 1].

    Returns a dict with ``symmetry`` = max |F(w, p) - F(-w, -p)| and
    ``moments`` = list of (l, m, n, |int_S M_n(w) Y_l^m(w) dw|) for l > n,
    where M_n(w) = int F(w, p) p^n dp (trapezoid rule on the uniform p grid).
    Residuals are raw (not normalised).
    """
    p = np.asarray(F.p, dtype=float)
    if not F.is_full or abs(p[0] + p[-1]) > 1e-12 or np.max(np.abs(p + p[::-1])) > 1e-12:
        raise ConfigError("full-range checks need a p grid symmetric about 0")
    anti = F.sphere.antipodes()
    sym = float(np.max(np.abs(F.values - F.values[anti, ::-1]))) if F.values.size else 0.0
    grid = F.sphere
    Y = special.harmonic_matrix(grid.dim, lmax, grid.nodes)
    idx = special.harmonic_indices(grid.dim, lmax)
    rows = []
    for n in range(n_max + 1):
        Mn = np.trapezoid(F.values * p ** n, p, axis=1)
        proj = (Y * grid.weights) @ Mn
        for r, (l, m) in enumerate(idx):
            if l > n:
                rows.append((l, m, n, abs(float(proj[r]))))
    return {"symmetry": sym, "moments": rows}


def one_sided_derivatives(p, F, deriv_max, window=0.1, degree=None):
    """d^n F(0) for n <= deriv_max from a least-squares Legendre fit on [0, window]."""
    p = np.asarray(p, dtype=float)
    sel = p <= p[0] + window + 1e-12
    if degree is None:
        degree = min(deriv_max + 6, int(sel.sum()) - 1)
    u = 2.0 * (p[sel] - p[0]) / window - 1.0
    coef = np.polynomial.legendre.legfit(u, np.asarray(F)[..., sel].T, degree)
    out = []
    for n in range(deriv_max + 1):
        cn = np.polynomial.legendre.legder(coef, n) if n else coef
        out.append(np.polynomial.legendre.legval(-1.0, cn) * (2.0 / window) ** n)
    return np.array(out).T  # (..., deriv_max+1)


def half_range_residuals(F, n_max=8, deriv_max=4, lmax=12, window=0.1):
    """Half-range conditions for a sinogram sampled on p in [0, 1].

    Moment entries are normalised like :func:`moment_residuals`.  Derivative
    entries use a one-sided polynomial fit on [0, window] and are reported as
    Taylor coefficients, max(0, |d^n F(0)| - U) window^n / n!, relative to
    max|F_l^m| plus the noise floor carried through the fit.  U is the spread
    over the fits in ``HALF_RANGE_FITS``.
    Returns ``(moments, smoothness)`` lists of (l, m, n, value).
    """
    p = np.asarray(F.p, dtype=float)
    if p[0] < -1e-12:
        raise ConfigError("half-range checks need p in [0, 1]")
    idx, Fl = _project(F, lmax)
    floor = FLOOR_REL * F.norm()
    moments = _moment_table(idx, p, Fl, n_max, floor)
    der = one_sided_derivatives(p, Fl, deriv_max, window=window)
    spread = np.zeros_like(der)
    for w, deg in HALF_RANGE_FITS:
        alt = one_sided_derivatives(p, Fl, deriv_max, window=w or window, degree=deg)
        spread = np.maximum(spread, np.abs(alt - der))
    taylor = window ** np.arange(deriv_max + 1) / [math.factorial(n) for n in range(deriv_max + 1)]
    # l1 norm of the sample-to-derivative map: how far roundoff is amplified
    n_fit = int(np.sum(p <= p[0] + window + 1e-12))
    gain = np.abs(one_sided_derivatives(p[:n_fit], np.eye(n_fit), deriv_max, window=window)).sum(axis=0)
    gain = gain * taylor / (gain[0] * taylor[0])
    sup = np.max(np.abs(Fl), axis=-1)
    smooth = []
    for r, (l, m) in enumerate(idx):
        for n in range(deriv_max + 1):
            if (l + n) % 2 == 0:
                continue
            den = sup[r] + floor * gain[n]
            val = max(0.0, abs(der[r, n]) - spread[r, n]) * taylor[n]
            smooth.append((l, m, n, val / den if den > 0 else 0.0))
    return moments, smooth


# ---------------------------------------------------------------------------
# reports


@dataclass
class RangeReport:
    dimension: int
    moment_residuals: list
    smoothness_residuals: list
    aggregate: float
    verdict: str
    thresholds: dict
    grids: dict = field(default_factory=dict)
    normalization: dict = field(default_factory=dict)

    @property
    def aggregate_moments(self):
        return max((v for *_, v in self.moment_residuals), default=0.0)

    @property
    def aggregate_smoothness(self):
        return max((v for *_, v in self.smoothness_residuals), default=0.0)

    def worst(self, k=5):
        tagged = [("moment",) + tuple(r) for r in self.moment_residuals]
        tagged += [("smoothness",) + tuple(r) for r in self.smoothness_residuals]
        return sorted(tagged, key=lambda r: -r[-1])[:k]

    def to_dict(self):
        def table(rows):
            return [{"l": int(l), "m": int(m), "n": int(n), "value": float(v)} for l, m, n, v in rows]

        return {
            "report_version": REPORT_VERSION,
            "dimension": self.dimension,
            "grids": self.grids,
            "moment_residuals": table(self.moment_residuals),
            "smoothness_residuals": table(self.smoothness_residuals),
            "aggregate": float(self.aggregate),
            "aggregate_moments": float(self.aggregate_moments),
            "aggregate_smoothness": float(self.aggregate_smoothness),
            "verdict": self.verdict,
            "thresholds": self.thresholds,
            "normalization": self.normalization,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc):
        try:
            if doc["report_version"] != REPORT_VERSION:
                raise FormatError(f"unsupported report version {doc['report_version']}")

            def rows(key):
                return [(e["l"], e["m"], e["n"], e["value"]) for e in doc[key]]

            return cls(
                dimension=doc["dimension"],
                moment_residuals=rows("moment_residuals"),
                smoothness_residuals=rows("smoothness_residuals"),
                aggregate=doc["aggregate"],
                verdict=doc["verdict"],
                thresholds=doc["thresholds"],
                grids=doc.get("grids", {}),
                normalization=doc.get("normalization", {}),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed range report: {exc}") from None

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"report is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def classify(aggregate, theta_pass=THETA_PASS, theta_fail=THETA_FAIL):
    if not theta_pass < theta_fail:
        raise ConfigError(f"need theta_pass < theta_fail, got {theta_pass} >= {theta_fail}")
    if aggregate <= theta_pass:
        return IN_RANGE
    if aggregate >= theta_fail:
        return OUT_OF_RANGE
    return INCONCLUSIVE


def verdict(moments, smoothness, theta_pass=THETA_PASS, theta_fail=THETA_FAIL, dimension=None,
            grids=None, normalization=None):
    """Aggregate residual tables (max over entries) and classify."""
    if not theta_pass < theta_fail:
        raise ConfigError(f"need theta_pass < theta_fail, got {theta_pass} >= {theta_fail}")
    vals = [v for *_, v in moments] + [v for *_, v in smoothness]
    if any(v < 0 or not np.isfinite(v) for v in vals):
        raise ConfigError("residuals must be finite and nonnegative")
    agg = max(vals, default=0.0)
    return RangeReport(
        dimension=dimension,
        moment_residuals=list(moments),
        smoothness_residuals=list(smoothness),
        aggregate=float(agg),
        verdict=classify(agg, theta_pass, theta_fail),
        thresholds={"theta_pass": theta_pass, "theta_fail": theta_fail},
        grids=grids or {},
        normalization=normalization or {},
    )


def check_channels(R, n_max=8, deriv_max=8, theta_pass=THETA_PASS, theta_fail=THETA_FAIL, grids=None):
    """Moment and smoothness residuals of channel functions and their verdict."""
    table = smoothness_table(R, deriv_max)
    raw = [r / s if s > 0 else 0.0 for *_, r, _u, s in table]
    norm = {
        "b_norm": R.b_norm,
        "floor_rel": FLOOR_REL,
        "smoothness_raw_max": float(max(raw, default=0.0)),
        "smoothness_unresolved": int(sum(u >= r for *_, r, u, _s in table if r > 0)),
        "smoothness_entries": len(table),
    }
    return verdict(
        moment_residuals(R, n_max),
        smoothness_residuals(R, deriv_max),
        theta_pass,
        theta_fail,
        dimension=R.dim,
        grids=grids,
        normalization=norm,
    )


# ---------------------------------------------------------------------------
# fault injection


def violation_profile(d, l, n, tg, degree=4):
    """Smooth time profile w on [0, 1] whose channel function breaks moment n.

    w = onset(t) * sum_k c_k P_k(2t - 1) with a C-infinity onset over [0, 0.2];
    the weights maximise (int_0^1 F p^n dp)^2 / int_0^1 F^2 dp, where F is the
    channel function of w in degree l.  Scaled to max |w| = 1.
    """
    from . import exterior, grids

    t = tg.t_phys
    onset = 1.0 - grids.smooth_step(t / 0.2)
    B = np.array([onset * np.polynomial.legendre.Legendre.basis(k)(2.0 * t - 1.0) for k in range(degree + 1)])
    ch = grids.HarmonicChannels(dim=d, indices=[(l, 0)] * len(B), time=tg, series=B, b_norm=1.0)
    R = exterior.channel_response(grids.extend_and_transform(ch), n_max=0)
    Fk = 2.0 * R.values[:, ::-1]
    p = -R.t[::-1]
    a = np.trapezoid(Fk * p ** n, p, axis=1)
    G = np.trapezoid(Fk[:, None, :] * Fk[None, :, :], p, axis=2)
    c = np.linalg.solve(G + 1e-12 * np.trace(G) * np.eye(len(B)), a)
    w = c @ B
    return w / np.max(np.abs(w))


def inject_violation(b, l=5, m=None, n=1, eps=1e-2):
    """Add a smooth out-of-range component to boundary data.

    The added term is w(t) Y_l^m(theta) with w from :func:`violation_profile`,
    scaled to eps * ||b|| in the discrete cylinder norm.  It breaks the (l, n)
    moment condition and generically the other moments of the same channel.
    The default order is m = 0 (d=3) or m = -l (the sine harmonic, d=2).
    """
    from dataclasses import replace

    if m is None:
        m = 0 if b.sphere.dim == 3 else -l
    if not (l > n >= 0 and (l + n) % 2 == 0):
        raise ConfigError(f"(l={l}, n={n}) is not a moment condition (need l > n, l + n even)")
    if 2 * l + 2 > b.sphere.Q:
        raise ConfigError(f"degree {l} is not resolved by Q={b.sphere.Q}")
    w = violation_profile(b.sphere.dim, l, n, b.time)
    Y = special.real_sph_harm(b.sphere.dim, l, m, b.sphere.nodes)
    add = np.outer(w, Y)
    unit = replace(b, values=add).norm()
    scale = eps * (b.norm() if b.norm() > 0 else 1.0) / unit
    return replace(b, values=b.values + scale * add)


def parse_violation(text):
    """Parse ``l=5,n=1,eps=1e-2[,m=0]`` into keyword arguments."""
    out = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in ("l", "m", "n", "eps"):
            raise ConfigError(f"cannot parse violation {text!r}; expected l=..,n=..,eps=..[,m=..]")
        try:
            out[key] = float(val) if key == "eps" else int(val)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    return out
