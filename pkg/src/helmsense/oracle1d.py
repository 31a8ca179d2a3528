"""Closed forms for the 1D example on (-1, 1) with a point hole at 0.

The example is posed as eta'' + k^2 eta = x, i.e. -eta'' - k^2 eta = f with
f(x) = -x in the library's sign convention (see ``states.example_1d``).

``tracking`` selects the tracking target used by the adjoint:

* ``"matched"``: eta_d = x/k^2 - 2 sin(kx)/(k^2 sin k).  The adjoint then
  solves -p'' - k^2 p = a sin(kx) with a = 2(k^2 - 1)/(k^2 sin k), the
  amplitude printed for this example.
* ``"linear"``: eta_d = x/k^2.  The weak adjoint equation then gives the
  amplitude 2(k^2 + 1)/(k^2 sin k).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, DomainError

SINGULAR_TOL = 1e-8
QUAD_TOL = 1e-12


@dataclass(frozen=True)
class Oracle1DConfig:
    k: float = 2.0
    r: float = 0.1
    tracking: str = "matched"

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if abs(math.sin(self.k)) <= SINGULAR_TOL or abs(math.cos(self.k)) <= SINGULAR_TOL:
            raise ConfigError(f"k={self.k} is a singular wavenumber of the closed forms")
        if not 0 < self.r < 1:
            raise ConfigError("hole radius must lie in (0, 1)")
        if abs(math.sin(self.k * self.r)) <= SINGULAR_TOL:
            raise ConfigError("sin(kr) vanishes")
        if self.tracking not in ("matched", "linear"):
            raise ConfigError(f"unknown tracking target {self.tracking!r}")

    @property
    def amplitude(self):
        k = self.k
        sign = -1.0 if self.tracking == "matched" else 1.0
        return 2.0 * (k * k + sign) / (k * k * math.sin(k))


# -- unperturbed state ----------------------------------------------------

def eta0_exact(cfg, x):
    k = cfg.k
    x = np.asarray(x, dtype=float)
    return -np.sin(k * x) / (k * k * math.sin(k)) + x / k ** 2


def eta0_prime(cfg, x):
    k = cfg.k
    x = np.asarray(x, dtype=float)
    return -np.cos(k * x) / (k * math.sin(k)) + 1.0 / k ** 2


# -- perturbed state (Dirichlet hole) -------------------------------------

def eta_r_coefficients(cfg):
    """((a_left, b_left), (a_right, b_right)): eta_r = a cos kx + b sin kx + x/k^2 on each side."""
    k, r = cfg.k, cfg.r
    t = math.tan(k)
    D = t * math.cos(k * r) - math.sin(k * r)
    c = r - math.cos(k * r) / math.cos(k)
    left = (1.0 / (k * k * math.cos(k)) + t / (k * k * D) * c, c / (k * k * D))
    D2 = math.sin(k * r) - t * math.cos(k * r)
    c2 = math.cos(k * r) / math.cos(k) - r
    right = (-1.0 / (k * k * math.cos(k)) - t / (k * k * D2) * c2, c2 / (k * k * D2))
    return left, right


def _check_outside(cfg, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) < cfg.r * (1 - 1e-14)) or np.any(np.abs(x) > 1 + 1e-14):
        raise DomainError(f"perturbed state is defined on [-1,-r] U [r,1] with r={cfg.r}")
    return x


def eta_r_exact(cfg, x):
    x = _check_outside(cfg, x)
    k = cfg.k
    (aL, bL), (aR, bR) = eta_r_coefficients(cfg)
    a = np.where(x < 0, aL, aR)
    b = np.where(x < 0, bL, bR)
    return a * np.cos(k * x) + b * np.sin(k * x) + x / k ** 2


def eta_r_prime(cfg, x):
    x = _check_outside(cfg, x)
    k = cfg.k
    (aL, bL), (aR, bR) = eta_r_coefficients(cfg)
    a = np.where(x < 0, aL, aR)
    b = np.where(x < 0, bL, bR)
    return -a * k * np.sin(k * x) + b * k * np.cos(k * x) + 1.0 / k ** 2


def extension_exact(cfg, x):
    """Solution inside [-r, r] vanishing at +-r."""
    k, r = cfg.k, cfg.r
    x = np.asarray(x, dtype=float)
    return -(r / (k * k * math.sin(k * r))) * np.sin(k * x) + x / k ** 2


def ode_residual(cfg, which, x):
    """|u'' + k^2 u - x| using hand-coded second derivatives (sin/cos parts only)."""
    k = cfg.k
    x = np.asarray(x, dtype=float)
    if which == "eta0":
        u = eta0_exact(cfg, x)
        upp = k * k * np.sin(k * x) / (k * k * math.sin(k))
    elif which == "eta_r":
        (aL, bL), (aR, bR) = eta_r_coefficients(cfg)
        a = np.where(x < 0, aL, aR)
        b = np.where(x < 0, bL, bR)
        u = eta_r_exact(cfg, x)
        upp = -k * k * (a * np.cos(k * x) + b * np.sin(k * x))
    elif which == "extension":
        u = extension_exact(cfg, x)
        upp = k * k * (cfg.r / (k * k * math.sin(k * cfg.r))) * np.sin(k * x)
    else:
        raise ValueError(which)
    return np.abs(upp + k * k * u - x)


# -- adjoint ----------------------------------------------------------------

def p0_exact(cfg, x):
    """(p0(x), p0'(x)) for -p'' - k^2 p = a sin(kx), p(+-1) = 0."""
    k = cfg.k
    if abs(math.tan(k)) < SINGULAR_TOL:
        raise ConfigError(f"tan k vanishes at k={k}")
    a = cfg.amplitude
    x = np.asarray(x, dtype=float)
    p = -(a / (2 * k * math.tan(k))) * np.sin(k * x) + (a / (2 * k)) * x * np.cos(k * x)
    dp = (a / (2 * k)) * np.cos(k * x) - (a / (2 * math.tan(k))) * np.cos(k * x) - (a / 2) * x * np.sin(k * x)
    return p, dp


def adjoint_residual(cfg, x):
    k, a = cfg.k, cfg.amplitude
    x = np.asarray(x, dtype=float)
    c1 = -a / (2 * k * math.tan(k))
    p, _ = p0_exact(cfg, x)
    # p'' of c1 sin kx + (a/2k) x cos kx
    ppp = -c1 * k * k * np.sin(k * x) + (a / (2 * k)) * (-2 * k * np.sin(k * x) - k * k * x * np.cos(k * x))
    return np.abs(-ppp - k * k * p - a * np.sin(k * x))


# -- corrector w^r = eta^r - eta0 --------------------------------------------

def w_exact(cfg, x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < cfg.r
    out = np.empty_like(x)
    out[inside] = extension_exact(cfg, x[inside]) - eta0_exact(cfg, x[inside])
    xo = x[~inside]
    out[~inside] = eta_r_exact(cfg, xo) - eta0_exact(cfg, xo)
    return out


def w_prime(cfg, x):
    x = np.asarray(x, dtype=float)
    k, r = cfg.k, cfg.r
    inside = np.abs(x) < r
    out = np.empty_like(x)
    xi = x[inside]
    out[inside] = (1.0 / (k * math.sin(k)) - r / (k * math.sin(k * r))) * np.cos(k * xi)
    xo = x[~inside]
    out[~inside] = eta_r_prime(cfg, xo) - eta0_prime(cfg, xo)
    return out


def _integrate_outside(cfg, g):
    r = cfg.r
    total = 0.0
    for a, b in ((-1.0, -r), (r, 1.0)):
        total += quad(lambda x: float(g(np.array([x]))[0]), a, b, epsabs=QUAD_TOL, epsrel=1e-13, limit=200)[0]
    return total


def corrector_norms(cfg):
    """(||w||^2_{L2(Omega_r)}, ||w'||^2_{L2(Omega_r)}, ||w||^2_{L2(E_r)}) by adaptive quadrature."""
    l2 = _integrate_outside(cfg, lambda x: w_exact(cfg, x) ** 2)
    h1 = _integrate_outside(cfg, lambda x: w_prime(cfg, x) ** 2)
    r = cfg.r
    inner = quad(lambda x: float(w_exact(cfg, np.array([x]))[0] ** 2), -r, r, epsabs=QUAD_TOL, epsrel=1e-13)[0]
    return l2, h1, inner


def _display_brackets(cfg):
    k, r = cfg.k, cfg.r
    plus = 0.5 * (1 - r) + 0.25 * (math.sin(2 * k) - math.sin(2 * k * r))
    minus = 0.5 * (1 - r) - 0.25 * (math.sin(2 * k) - math.sin(2 * k * r))
    return plus, minus


def printed_l2_display(cfg):
    """||w/sqrt(2r)||^2 on Omega_r exactly as printed (coefficient squares times bracket factors)."""
    k, r = cfg.k, cfg.r
    t = math.tan(k)
    D = t * math.cos(k * r) - math.sin(k * r)
    D2 = math.sin(k * r) - t * math.cos(k * r)
    c = r - math.cos(k * r) / math.cos(k)
    c2 = math.cos(k * r) / math.cos(k) - r
    plus, minus = _display_brackets(cfg)
    terms = [
        (1 / (k * k * math.cos(k)) + t / (k * k * D) * c) ** 2 * plus,
        (1 / (k * k * math.sin(k)) + 1 / (k * k * D) * c) ** 2 * minus,
        (-1 / (k * k * math.cos(k)) - t / (k * k * D2) * c2) ** 2 * plus,
        (1 / (k * k * math.sin(k)) + 1 / (k * k * D2) * c2) ** 2 * minus,
    ]
    return sum(terms) / (2 * r)


def printed_h1_display(cfg):
    """||(w)'/sqrt(2r)||^2 on Omega_r exactly as printed."""
    k, r = cfg.k, cfg.r
    t = math.tan(k)
    D = t * math.cos(k * r) - math.sin(k * r)
    D2 = math.sin(k * r) - t * math.cos(k * r)
    c = r - math.cos(k * r) / math.cos(k)
    c2 = math.cos(k * r) / math.cos(k) - r
    plus, minus = _display_brackets(cfg)
    terms = [
        (-1 / (k * math.cos(k)) - t / (k * D) * c) ** 2 * minus,
        (1 / (k * math.sin(k)) + 1 / (k * D) * c) ** 2 * plus,
        (1 / (k * math.cos(k)) + t / (k * D2) * c2) ** 2 * minus,
        (1 / (k * math.sin(k)) + 1 / (k * D2) * c2) ** 2 * plus,
    ]
    return sum(terms) / (2 * r)


def printed_inner_display(cfg):
    """||w/sqrt(2r)||^2 on E_r as printed."""
    k, r = cfg.k, cfg.r
    return (1 / (k * k * math.sin(k)) - r / (k * k * math.sin(k * r))) ** 2 * (r - 0.5 * math.sin(2 * k * r)) / (2 * r)


def printed_l1(cfg):
    """The printed two-endpoint chain for l1, evaluated term by term (it cancels)."""
    k, r = cfg.k, cfg.r
    a = cfg.amplitude
    P = (a / (2 * k)) * math.cos(k * r) - (a / (2 * math.tan(k))) * math.cos(k * r) - (a / 2) * r * math.sin(k * r)
    W = 1 / (k * k * math.sin(k)) - r / (k * k * math.sin(k * r))
    return -math.sin(k * r) / (2 * r) * P * W + math.sin(k * r) / (2 * r) * P * W


def l1_exact(cfg):
    """(1/s) * sum over x = +-r of p0'(x) d_E'(x) w(x), with s = 2r and d_E' = sign(x)."""
    r = cfg.r
    s = 2 * r
    x = np.array([-r, r])
    _, dp = p0_exact(cfg, x)
    w = w_exact(cfg, x)  # trace from Omega_r: eta_r(+-r) = 0
    return float(np.sum(dp * np.sign(x) * w)) / s


def eta_d_exact(cfg, x):
    x = np.asarray(x, dtype=float)
    k = cfg.k
    base = x / k ** 2
    if cfg.tracking == "linear":
        return base
    return base - 2 * np.sin(k * x) / (k * k * math.sin(k))


def _objective(cfg, u, du, intervals):
    def g(x):
        X = np.array([x])
        return float(du(cfg, X)[0] ** 2 + (u(cfg, X)[0] - eta_d_exact(cfg, X)[0]) ** 2)

    return sum(quad(g, a, b, epsabs=QUAD_TOL, epsrel=1e-13, limit=200)[0] for a, b in intervals)


def objective_exact(cfg):
    """J(Omega) = int |eta0'|^2 + |eta0 - eta_d|^2 with A = 0."""
    return _objective(cfg, eta0_exact, eta0_prime, [(-1.0, 1.0)])


def objective_hole_exact(cfg):
    """J(Omega_r) for the Dirichlet point hole with A = 0."""
    return _objective(cfg, eta_r_exact, eta_r_prime, [(-1.0, -cfg.r), (cfg.r, 1.0)])


@dataclass
class SeriesRow:
    r: float
    l0: float
    l1: float
    R: float
    l0_printed: float
    l1_printed: float
    l2_part: float
    h1_part: float


@dataclass
class SeriesReport:
    rows: list
    trend: str
    limit: float | None
    claims_divergence: bool
    agrees_with_divergence_claim: bool
    display_disagreement: bool
    l1_disagreement: bool


def remainder_series_exact(cfg, r_list, rel_tol=1e-8):
    """l0, l1 and R = l0 + l1 for each r, next to the printed displays."""
    from .util import estimate_limit_parts

    rows = []
    for r in sorted(r_list, reverse=True):
        c = replace(cfg, r=r)
        s = 2 * r
        l2, h1, _ = corrector_norms(c)
        l0 = (l2 + h1) / s
        l1 = l1_exact(c)
        printed = printed_l2_display(c) + printed_h1_display(c)
        rows.append(SeriesRow(r, l0, l1, l0 + l1, printed, printed_l1(c), l2 / s, h1 / s))
    limit, status = estimate_limit_parts([[row.l0 for row in rows], [row.l1 for row in rows]])
    display_bad = any(abs(row.l0_printed - row.l0) > rel_tol * max(abs(row.l0), 1e-300) for row in rows)
    l1_bad = any(abs(row.l1_printed - row.l1) > rel_tol * max(abs(row.l1), 1e-300) for row in rows)
    return SeriesReport(rows, status, limit, True, status == "divergent", display_bad, l1_bad)
