"""Shape derivative of the tracking functional by the Lagrangian method.

Everything lives on the fixed mesh of Omega: the perturbed functional
J(T_s(Omega)) is pulled back with B(s), J_s and the transported data, which
is an exact change of variables, so no remeshing noise enters the checks.
All integrals use the standard element quadrature, which makes the discrete
identities  J_h(s) = L_h(s, eta^s, p)  and  d/ds L_h = shape_derivative
hold to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fem
from .fem import FemField, quadrature
from .geometry import (Domain, TransportMap, VelocityField, b_prime_zero, pullback_matrix,
                       transport)
from .mesh import Mesh
from .states import ProblemData, solve_adjoint, solve_direct, solve_direct_pullback
from .util import ordered_map, try_fit_slope

TERMS = ("gradient_tracking", "l2_tracking", "adjoint_stiffness", "mass", "source")


def eval_J(mesh: Mesh, eta: FemField, data: ProblemData, restriction=None) -> float:
    """int |grad eta - A|^2 + |eta - eta_d|^2, optionally over one element region."""
    quad = quadrature(mesh)
    mask = mesh.element_mask(restriction)
    m, q = quad.weights.shape
    X = quad.points.reshape(-1, mesh.dim)
    g = eta.element_gradients()[:, None, :] - data.target.grad(X).reshape(m, q, mesh.dim)
    v = fem.quad_values(eta, quad) - data.eta_d.value(X).reshape(m, q)
    integrand = np.sum(g * g, axis=2) + v * v
    return float(np.sum((quad.weights * integrand)[mask]))


class _Sampler:
    """Pulled-back coefficients and data at the quadrature points for a given s."""

    def __init__(self, mesh: Mesh, data: ProblemData, tmap: TransportMap):
        self.mesh, self.data, self.tmap = mesh, data, tmap
        self.quad = quadrature(mesh)
        self.X = self.quad.points.reshape(-1, mesh.dim)
        self.shape = self.quad.weights.shape

    def coefficients(self, s):
        m, q = self.shape
        N = self.mesh.dim
        X = self.X
        B = pullback_matrix(self.tmap, s, X).reshape(m, q, N, N)
        J = self.tmap.det(s, X).reshape(m, q)
        T = transport(self.tmap, s, X)
        DT = self.tmap.jacobian(s, X)
        # grad of the transported target potential: DT^T (grad eta~)(T_s x)
        gt = np.einsum("nji,nj->ni", DT, self.data.target.grad(T)).reshape(m, q, N)
        eta_d = self.data.eta_d.value(T).reshape(m, q)
        f = self.data.f.value(T).reshape(m, q)
        return B, J, gt, eta_d, f

    def values(self, u: FemField):
        return fem.quad_values(u, self.quad), u.element_gradients()[:, None, :]


def lagrangian(mesh: Mesh, data: ProblemData, tmap: TransportMap, s, phi: FemField, psi: FemField,
               sampler: Optional[_Sampler] = None) -> float:
    """L(s, phi, psi): pulled-back objective plus the pulled-back state equation tested with psi."""
    S = sampler or _Sampler(mesh, data, tmap)
    B, J, gt, eta_d, f = S.coefficients(s)
    u, gu = S.values(phi)
    p, gp = S.values(psi)
    e = np.broadcast_to(gu, gt.shape) - gt
    gu = np.broadcast_to(gu, gt.shape)
    gp = np.broadcast_to(gp, gt.shape)
    integrand = (np.einsum("mqi,mqij,mqj->mq", e, B, e) + J * (u - eta_d) ** 2
                 + np.einsum("mqi,mqij,mqj->mq", gp, B, gu) - data.k ** 2 * J * u * p - J * f * p)
    return float(np.sum(S.quad.weights * integrand))


def pulled_back_J(mesh, data, tmap, s, eta_s, sampler=None) -> float:
    """J(T_s(Omega)) by change of variables, for the transported state eta_s on the fixed mesh."""
    S = sampler or _Sampler(mesh, data, tmap)
    B, J, gt, eta_d, _ = S.coefficients(s)
    u, gu = S.values(eta_s)
    e = np.broadcast_to(gu, gt.shape) - gt
    integrand = np.einsum("mqi,mqij,mqj->mq", e, B, e) + J * (u - eta_d) ** 2
    return float(np.sum(S.quad.weights * integrand))


@dataclass
class ShapeSensitivityReport:
    dJ: float
    breakdown: dict
    remainder: list = field(default_factory=list)
    continuity: list = field(default_factory=list)
    finite_difference: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    coercivity_margin: Optional[float] = None
    poincare_constant: Optional[float] = None
    beta: Optional[float] = None


def derivative_terms(mesh: Mesh, data: ProblemData, V: VelocityField, eta0: FemField, p0: FemField):
    """The five volume contributions of d_s L(0, eta0, p0)."""
    tmap = TransportMap(V)
    quad = quadrature(mesh)
    m, q = quad.weights.shape
    N = mesh.dim
    X = quad.points.reshape(-1, N)
    Bp = b_prime_zero(tmap, X).reshape(m, q, N, N)
    div = V.div(X).reshape(m, q)
    Vx = V(X).reshape(m, q, N)
    DV = V.jac(X).reshape(m, q, N, N)
    At = data.target.grad(X).reshape(m, q, N)
    H = data.target.hessian(X).reshape(m, q, N, N)
    d_target = np.einsum("mqij,mqj->mqi", H, Vx) + np.einsum("mqji,mqj->mqi", DV, At)

    u = fem.quad_values(eta0, quad)
    p = fem.quad_values(p0, quad)
    gu = np.broadcast_to(eta0.element_gradients()[:, None, :], (m, q, N))
    gp = np.broadcast_to(p0.element_gradients()[:, None, :], (m, q, N))
    e = gu - At
    r = u - data.eta_d.value(X).reshape(m, q)
    grad_eta_d = data.eta_d.grad(X).reshape(m, q, N)
    f = data.f.value(X).reshape(m, q)
    grad_f = data.f.grad(X).reshape(m, q, N)

    w = quad.weights
    integrands = {
        "gradient_tracking": np.einsum("mqi,mqij,mqj->mq", e, Bp, e) - 2.0 * np.sum(e * d_target, axis=2),
        "l2_tracking": r * r * div - 2.0 * r * np.sum(grad_eta_d * Vx, axis=2),
        "adjoint_stiffness": np.einsum("mqi,mqij,mqj->mq", gu, Bp, gp),
        "mass": -data.k ** 2 * u * p * div,
        "source": -(f * div + np.sum(grad_f * Vx, axis=2)) * p,
    }
    return {name: float(np.sum(w * integrands[name])) for name in TERMS}


def _states(mesh, data, eta0=None, p0=None):
    eta0 = eta0 if eta0 is not None else solve_direct(mesh, data)
    p0 = p0 if p0 is not None else solve_adjoint(mesh, data, eta0)
    return eta0, p0


def fd_shape_check(mesh: Mesh, data: ProblemData, V: VelocityField, s_list, eta0=None):
    """[(s, (J(Omega_s) - J(Omega))/s)] sorted by decreasing s."""
    tmap = TransportMap(V)
    S = _Sampler(mesh, data, tmap)
    eta0 = eta0 if eta0 is not None else solve_direct(mesh, data)
    J0 = pulled_back_J(mesh, data, tmap, 0.0, eta0, S)

    def one(s):
        eta_s = solve_direct_pullback(mesh, data, tmap, s)
        return s, (pulled_back_J(mesh, data, tmap, s, eta_s, S) - J0) / s

    return ordered_map(one, sorted(s_list, reverse=True))


def _remainder_four_lines(S: _Sampler, s, eta0: FemField, eta_s: FemField, p0: FemField):
    """R(s) assembled line by line.

    The transported-target line carries -2(eta_d o T_s - eta_d): expanding
    L(s, eta^s, p0) - L(s, eta0, p0) and using the adjoint equation gives this
    sign; it is what makes R(s) equal its defining difference quotient.
    """
    data = S.data
    m, q = S.shape
    N = S.mesh.dim
    B, J, gt, eta_d_s, _ = S.coefficients(s)
    _, _, gt0, eta_d0, _ = S.coefficients(0.0)
    u0, g0 = S.values(eta0)
    us, gs = S.values(eta_s)
    p, gp = S.values(p0)
    g0 = np.broadcast_to(g0, (m, q, N))
    gs = np.broadcast_to(gs, (m, q, N))
    gp = np.broadcast_to(gp, (m, q, N))
    dg = gs - g0            # grad(eta^s - eta0)
    du = us - u0
    Bm = (B - np.eye(N)) / s
    Jm = (J - 1.0) / s
    w = S.quad.weights

    line1 = 2.0 * np.einsum("mqi,mqij,mqj->mq", 0.5 * (gs + g0) - gt, Bm, dg) + s * np.sum((dg / s) ** 2, axis=2)
    line2 = 2.0 * Jm * (0.5 * (us + u0) - eta_d_s) * du - 2.0 * np.sum((gt - gt0) * dg / s, axis=2)
    line3 = -2.0 * (eta_d_s - eta_d0) * du / s + s * (du / s) ** 2
    line4 = np.einsum("mqi,mqij,mqj->mq", gp, Bm, dg) - data.k ** 2 * Jm * p * du
    return float(np.sum(w * (line1 + line2 + line3 + line4)))


def remainder_R_shape(mesh: Mesh, data: ProblemData, V: VelocityField, s_list, eta0=None, p0=None):
    """[(s, R(s))] sorted by decreasing s."""
    tmap = TransportMap(V)
    S = _Sampler(mesh, data, tmap)
    eta0, p0 = _states(mesh, data, eta0, p0)

    def one(s):
        eta_s = solve_direct_pullback(mesh, data, tmap, s)
        return s, _remainder_four_lines(S, s, eta0, eta_s, p0)

    return ordered_map(one, sorted(s_list, reverse=True))


def remainder_by_definition(mesh, data, V, s, eta0=None, p0=None):
    """(L(s, eta^s, p0) - L(s, eta0, p0)) / s, the quantity the four lines expand."""
    tmap = TransportMap(V)
    S = _Sampler(mesh, data, tmap)
    eta0, p0 = _states(mesh, data, eta0, p0)
    eta_s = solve_direct_pullback(mesh, data, tmap, s)
    return (lagrangian(mesh, data, tmap, s, eta_s, p0, S) - lagrangian(mesh, data, tmap, s, eta0, p0, S)) / s


def coercivity_margin(domain: Domain, k, beta):
    """1 - k^2 c(Omega) beta with the analytic Poincare constant c(Omega)."""
    c = domain.poincare_constant()
    return 1.0 - k ** 2 * c * beta, c


def shape_derivative(mesh: Mesh, data: ProblemData, V: VelocityField, s_list=None,
                     domain: Optional[Domain] = None) -> ShapeSensitivityReport:
    """dJ = d_s L(0, eta0, p0) with its term breakdown; with ``s_list`` also the validation series."""
    eta0, p0 = _states(mesh, data)
    terms = derivative_terms(mesh, data, V, eta0, p0)
    dJ = math.fsum(terms.values())
    report = ShapeSensitivityReport(dJ, terms)
    if not s_list:
        return report
    tmap = TransportMap(V)
    S = _Sampler(mesh, data, tmap)
    J0 = pulled_back_J(mesh, data, tmap, 0.0, eta0, S)

    def one(s):
        eta_s = solve_direct_pullback(mesh, data, tmap, s)
        Js = pulled_back_J(mesh, data, tmap, s, eta_s, S)
        l2, h1 = fem.norms(eta_s - eta0)
        beta = float(np.max(tmap.det(s, S.X)))
        return s, (Js - J0) / s, _remainder_four_lines(S, s, eta0, eta_s, p0), math.hypot(l2, h1), beta

    rows = ordered_map(one, sorted(s_list, reverse=True))
    report.finite_difference = [(s, fd) for s, fd, _, _, _ in rows]
    report.remainder = [(s, R) for s, _, R, _, _ in rows]
    report.continuity = [(s, c) for s, _, _, c, _ in rows]
    ss = [r[0] for r in rows]
    report.slopes = {
        "fd_error": try_fit_slope(ss, [abs(dJ - fd) for _, fd, _, _, _ in rows]),
        "remainder": try_fit_slope(ss, [R for _, _, R, _, _ in rows]),
        "continuity": try_fit_slope(ss, [c for _, _, _, c, _ in rows]),
    }
    if domain is not None:
        report.beta = max(r[4] for r in rows)
        report.coercivity_margin, report.poincare_constant = coercivity_margin(domain, data.k, report.beta)
    return report
