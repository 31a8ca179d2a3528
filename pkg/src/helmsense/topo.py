"""Topological sensitivities: source perturbation and Dirichlet/Neumann holes.

For holes, eta0 and p0 are computed on a mesh of Omega fitted to the hole
boundary, so their restriction to the mesh of Omega_r is exact at the
nodes.  The closed-form part of a hole derivative uses a plain mesh of
Omega at the same h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fem
from .errors import ConfigError
from .fem import FemField
from .geometry import Domain, RectifiableSet, TransportMap
from .mesh import Mesh, generate_mesh, hole_meshes
from .shape import eval_J
from .states import (ProblemData, solve_adjoint, solve_direct, solve_direct_pullback, solve_hole,
                     solve_source_perturbed, transfer)
from .util import estimate_limit_parts, ordered_map, try_fit_slope

BOUNDED_RATIO = 3.0


@dataclass
class TopoSensitivityReport:
    variant: str
    closed_form: float
    dJ: Optional[float]
    limit: Optional[float] = None
    limit_status: Optional[str] = None
    l_series: list = field(default_factory=list)        # (r, l0, l1)
    remainder: list = field(default_factory=list)       # (s, R(s))
    finite_difference: list = field(default_factory=list)  # (s, quotient)
    slopes: dict = field(default_factory=dict)
    diverged: bool = False

    def __post_init__(self):
        if self.diverged and self.limit is not None:
            raise ValueError("a divergent series has no finite limit")


def _h1_squared(w: FemField, restriction=None):
    l2, h1 = fem.norms(w, restriction)
    return l2 * l2 + h1 * h1


def _eval_fn(f: FemField):
    return lambda P: fem.eval_field(f, P)[0].reshape(len(P))


# --------------------------------------------------------------------------
# Source perturbation
# --------------------------------------------------------------------------

def topo_source(mesh: Mesh, data: ProblemData, E: RectifiableSet, r_list) -> TopoSensitivityReport:
    """D_T J = (1 - gamma) int_E f p0 dH^d with the remainder and finite-difference series."""
    eta0 = solve_direct(mesh, data)
    p0 = solve_adjoint(mesh, data, eta0)
    g = 1.0 - data.gamma
    p_at = _eval_fn(p0)
    closed = g * E.hd_integral(lambda P: data.f.value(P) * p_at(P)) if g != 0 else 0.0
    J0 = eval_J(mesh, eta0, data)

    def one(r):
        s = E.dilation_volume(r)
        if g == 0:
            return s, 0.0, 0.0
        eta_s = solve_source_perturbed(mesh, data, E, r)
        return s, _h1_squared(eta_s - eta0) / s, (eval_J(mesh, eta_s, data) - J0) / s

    rows = ordered_map(one, sorted(r_list, reverse=True))
    rep = TopoSensitivityReport("source", closed, closed)
    rep.remainder = [(s, R) for s, R, _ in rows]
    rep.finite_difference = [(s, q) for s, _, q in rows]
    ss = [s for s, _, _ in rows]
    rep.slopes = {"remainder": try_fit_slope(ss, [R for _, R, _ in rows], min_decades=0.9),
                  "fd_error": try_fit_slope(ss, [q - closed for _, _, q in rows], min_decades=0.9)}
    return rep


# --------------------------------------------------------------------------
# Holes
# --------------------------------------------------------------------------

def l0_l1(mesh_with_hole: Mesh, eta_r: FemField, eta0: FemField, p0: FemField, E: RectifiableSet, r):
    """l0 = ||(eta_r - eta0)/sqrt(s)||^2_{H1(Omega_r)},
    l1 = s^{-1/2} int_{dE_r} (grad p0 . grad d_E) (eta_r - eta0)/sqrt(s)."""
    s = E.scale(r)
    eta0 = transfer(eta0, mesh_with_hole)
    p0 = transfer(p0, mesh_with_hole)
    w = eta_r - eta0
    l0 = _h1_squared(w) / s

    def weight(P):
        _, gp = fem.eval_field(p0, P)
        _, gd = E.distance(P)
        return np.sum(gp.reshape(len(P), -1) * gd.reshape(len(P), -1), axis=1)

    l1 = fem.boundary_integral(w, weight, "hole") / s
    return l0, l1


def hole_closed_form(mesh: Mesh, data: ProblemData, E: RectifiableSet, eta0=None, p0=None):
    """-int_E (|grad eta0 - A|^2 + |eta0 - eta_d|^2 + grad eta0.grad p0 - k^2 eta0 p0 - f p0) dH^d."""
    eta0 = eta0 if eta0 is not None else solve_direct(mesh, data)
    p0 = p0 if p0 is not None else solve_adjoint(mesh, data, eta0)

    def integrand(P):
        u, gu = fem.eval_field(eta0, P)
        p, gp = fem.eval_field(p0, P)
        u, p = u.reshape(len(P)), p.reshape(len(P))
        gu, gp = gu.reshape(len(P), -1), gp.reshape(len(P), -1)
        e = gu - data.target.grad(P)
        return (np.sum(e * e, axis=1) + (u - data.eta_d.value(P)) ** 2 + np.sum(gu * gp, axis=1)
                - data.k ** 2 * u * p - data.f.value(P) * p)

    return -E.hd_integral(integrand)


def _hole_sample(domain, data, E, bc, h, r):
    outer, _, full = hole_meshes(domain, h, E, r)
    eta0 = solve_direct(full, data)
    p0 = solve_adjoint(full, data, eta0)
    eta_r = solve_hole(outer, data, bc)
    l0, l1 = l0_l1(outer, eta_r, eta0, p0, E, r)
    s = E.scale(r)
    fd = (eval_J(outer, eta_r, data) - eval_J(full, eta0, data)) / s
    w = eta_r - transfer(eta0, outer)
    l2, h1 = fem.norms(w)
    return r, s, l0, l1, fd, math.hypot(l2, h1) / s


def topo_hole(domain: Domain, data: ProblemData, E: RectifiableSet, bc, r_list, h) -> TopoSensitivityReport:
    """Hole derivative dJ = l + closed form, with l estimated from the (l0 + l1)(r) series."""
    if bc not in ("dirichlet", "neumann"):
        raise ConfigError(f"unknown hole condition {bc!r}")
    base = generate_mesh(domain, h)
    closed = hole_closed_form(base, data, E)
    rows = ordered_map(lambda r: _hole_sample(domain, data, E, bc, h, r), sorted(r_list, reverse=True))
    limit, status = estimate_limit_parts([[r[2] for r in rows], [r[3] for r in rows]])
    rep = TopoSensitivityReport(f"{bc}_hole", closed, None if limit is None else limit + closed,
                                limit, status, diverged=(status == "divergent"))
    rep.l_series = [(r, l0, l1) for r, _, l0, l1, _, _ in rows]
    rep.remainder = [(s, l0 + l1) for _, s, l0, l1, _, _ in rows]
    rep.finite_difference = [(s, fd) for _, s, _, _, fd, _ in rows]
    ss = [s for _, s, _, _, _, _ in rows]
    rep.slopes = {"l0": try_fit_slope(ss, [l0 for _, _, l0, _, _, _ in rows], min_decades=0.9)}
    return rep


# --------------------------------------------------------------------------
# Corrector bound
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PullbackFamily:
    tmap: TransportMap
    s_list: tuple


@dataclass(frozen=True)
class SourceFamily:
    E: RectifiableSet
    r_list: tuple


@dataclass(frozen=True)
class HoleFamily:
    domain: Domain
    E: RectifiableSet
    bc: str
    r_list: tuple
    h: float


@dataclass
class CorrectorProbe:
    samples: list          # (s, ||(eta^s - eta0)/s||_{H1})
    ratio: float
    bounded: bool

    @property
    def verdict(self):
        return "bounded" if self.bounded else "unbounded"

    @property
    def diverged(self):
        return not self.bounded


def corrector_bound_probe(mesh: Mesh, data: ProblemData, family) -> CorrectorProbe:
    """Quotients ||(eta^s - eta0)/s||_{H1} along a perturbation family and a boundedness verdict."""
    if isinstance(family, HoleFamily):
        rows = ordered_map(lambda r: _hole_sample(family.domain, data, family.E, family.bc, family.h, r),
                           sorted(family.r_list, reverse=True))
        samples = [(s, q) for _, s, _, _, _, q in rows]
    else:
        eta0 = solve_direct(mesh, data)
        if isinstance(family, PullbackFamily):
            def one(s):
                w = solve_direct_pullback(mesh, data, family.tmap, s) - eta0
                return s, math.hypot(*fem.norms(w)) / s
            samples = ordered_map(one, sorted(family.s_list, reverse=True))
        elif isinstance(family, SourceFamily):
            def one(r):
                s = family.E.dilation_volume(r)
                w = solve_source_perturbed(mesh, data, family.E, r) - eta0
                return s, math.hypot(*fem.norms(w)) / s
            samples = ordered_map(one, sorted(family.r_list, reverse=True))
        else:
            raise ConfigError(f"unknown perturbation family {type(family).__name__}")
    q = np.array([v for _, v in samples])
    if np.all(q == 0):
        ratio = 1.0
    elif np.any(q == 0):
        ratio = math.inf
    else:
        ratio = float(q.max() / q.min())
    return CorrectorProbe(samples, ratio, ratio <= BOUNDED_RATIO)
