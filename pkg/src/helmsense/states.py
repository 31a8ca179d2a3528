"""Data functions and the state/adjoint solvers.

All solvers use one assembly path (``_state_system``) so that, e.g., the
pulled-back state at s = 0 is bitwise the unperturbed state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import fem
from .errors import ConfigError, MeshError, NumericalError
from .fem import FemField, LinearSystem, Quadrature, quadrature
from .geometry import RectifiableSet, TransportMap, as_points, pullback_matrix, transport, _unbatch
from .mesh import Mesh


# --------------------------------------------------------------------------
# Analytic data functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Func:
    """Scalar function of x with gradient and (optional) Hessian, vectorized over points."""

    dim: int
    value: Callable
    grad: Callable
    hess: Optional[Callable] = None
    name: str = "func"

    def __call__(self, X):
        P, single = as_points(X, self.dim)
        return _unbatch(np.asarray(self.value(P), dtype=float).reshape(len(P)), single)

    def gradient(self, X):
        P, single = as_points(X, self.dim)
        return _unbatch(np.asarray(self.grad(P), dtype=float).reshape(len(P), self.dim), single)

    def hessian(self, X):
        P, single = as_points(X, self.dim)
        if self.hess is None:
            raise NumericalError(f"{self.name} has no Hessian")
        return _unbatch(np.asarray(self.hess(P), dtype=float).reshape(len(P), self.dim, self.dim), single)

    def __add__(self, other):
        hess = None if self.hess is None or other.hess is None else (lambda P: self.hess(P) + other.hess(P))
        return Func(self.dim, lambda P: self.value(P) + other.value(P),
                    lambda P: self.grad(P) + other.grad(P), hess, f"{self.name}+{other.name}")

    def scaled(self, c):
        hess = None if self.hess is None else (lambda P: c * self.hess(P))
        return Func(self.dim, lambda P: c * self.value(P), lambda P: c * self.grad(P), hess,
                    f"{c}*{self.name}")

    def check_gradient(self, points, step=1e-6, rtol=1e-5):
        """Central-difference spot check of ``grad``; returns the worst relative error."""
        P, _ = as_points(points, self.dim)
        g = self.gradient(P)
        worst = 0.0
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            fd = (self(P + e) - self(P - e)) / (2 * step)
            err = np.abs(fd - g[:, i]) / np.maximum(1.0, np.abs(g[:, i]))
            worst = max(worst, float(err.max()))
        if worst > rtol:
            raise NumericalError(f"gradient of {self.name} fails the finite-difference check ({worst:.2e})")
        return worst


def quadratic(Q, b=None, c=0.0, name="quadratic"):
    """0.5 x^T Q x + b.x + c."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    dim = Q.shape[0]
    b = np.zeros(dim) if b is None else np.asarray(b, dtype=float).reshape(dim)
    return Func(dim,
                lambda P: 0.5 * np.einsum("ni,ij,nj->n", P, Q, P) + P @ b + c,
                lambda P: P @ Q + b,
                lambda P: np.broadcast_to(Q, (len(P), dim, dim)).copy(),
                name)


def constant(c, dim):
    return quadratic(np.zeros((dim, dim)), None, c, name=f"const({c})")


def zero(dim):
    return constant(0.0, dim)


def linear(a, c=0.0):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return quadratic(np.zeros((len(a), len(a))), a, c, name="linear")


def sine_product(dim, freq=math.pi, amplitude=1.0, shift=0.0):
    """amplitude * prod_i sin(freq (x_i - shift))."""

    def value(P):
        return amplitude * np.prod(np.sin(freq * (P - shift)), axis=1)

    def grad(P):
        S = np.sin(freq * (P - shift))
        C = np.cos(freq * (P - shift))
        G = np.empty_like(P)
        for i in range(dim):
            G[:, i] = amplitude * freq * C[:, i] * np.prod(np.delete(S, i, axis=1), axis=1)
        return G

    def hess(P):
        S = np.sin(freq * (P - shift))
        C = np.cos(freq * (P - shift))
        H = np.empty((len(P), dim, dim))
        for i in range(dim):
            for j in range(dim):
                fac = np.ones(len(P))
                for m in range(dim):
                    if m == i and m == j:
                        fac = fac * (-freq ** 2 * S[:, m])
                    elif m == i or m == j:
                        fac = fac * (freq * C[:, m])
                    else:
                        fac = fac * S[:, m]
                H[:, i, j] = amplitude * fac
        return H

    return Func(dim, value, grad, hess, "sine_product")


def ramp_source_1d():
    """f(x) = -x: the 1D example's eta'' + k^2 eta = x written as -eta'' - k^2 eta = f."""
    return Func(1, lambda P: -P[:, 0], lambda P: -np.ones((len(P), 1)),
                lambda P: np.zeros((len(P), 1, 1)), "ramp")


def sine_1d(amplitude, k):
    """amplitude * sin(k x) on the line."""
    return Func(1, lambda P: amplitude * np.sin(k * P[:, 0]),
                lambda P: (amplitude * k * np.cos(k * P[:, 0]))[:, None],
                lambda P: (-amplitude * k * k * np.sin(k * P[:, 0]))[:, None, None], "sine")


def eta_d_linear(k):
    """x / k^2."""
    return linear([1.0 / k ** 2])


def eta_d_matched(k):
    """x/k^2 - 2 sin(kx)/(k^2 sin k): the target for which the 1D adjoint has amplitude 2(k^2-1)/(k^2 sin k)."""
    return eta_d_linear(k) + sine_1d(-2.0 / (k ** 2 * math.sin(k)), k)


def from_field(f: FemField, name="field"):
    """Wrap a FemField as a data function (zero Hessian)."""
    N = f.mesh.dim
    return Func(N, lambda P: fem.eval_field(f, P)[0].reshape(len(P)),
                lambda P: fem.eval_field(f, P)[1].reshape(len(P), N),
                lambda P: np.zeros((len(P), N, N)), name)


@dataclass(frozen=True)
class ProblemData:
    """k, source f, target potential (A = grad of it), tracking target eta_d, contrast gamma."""

    k: float
    f: Func
    target: Func
    eta_d: Func
    gamma: float = 1.0

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError("wavenumber must be nonnegative")
        dims = {self.f.dim, self.target.dim, self.eta_d.dim}
        if len(dims) != 1:
            raise ConfigError("data functions have inconsistent dimensions")

    @property
    def dim(self):
        return self.f.dim

    def A(self, X):
        return self.target.gradient(X)

    def with_gamma(self, gamma):
        return ProblemData(self.k, self.f, self.target, self.eta_d, gamma)

    def check(self, domain, n=10, seed=0):
        """Finite-difference spot check of every gradient at n random points of the domain."""
        rng = np.random.default_rng(seed)
        pts = _random_points(domain, n, rng)
        return max(fn.check_gradient(pts) for fn in (self.f, self.target, self.eta_d))


def _random_points(domain, n, rng):
    if domain.kind == "interval":
        a, b = domain.params
        return rng.uniform(a, b, size=(n, 1))
    if domain.kind == "rectangle":
        lo, hi = np.asarray(domain.params[0]), np.asarray(domain.params[1])
        return lo + (hi - lo) * rng.uniform(size=(n, 2))
    c, R = domain.params
    rho = R * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0, 2 * math.pi, size=n)
    return np.asarray(c) + np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1)


def trivial_data(dim, k):
    z = zero(dim)
    return ProblemData(k, z, z, z)


def example_1d(k=2.0, A=0.0, tracking="matched", gamma=1.0):
    """The 1D ramp example on (-1, 1): f = -x, constant gradient target A."""
    eta_d = eta_d_matched(k) if tracking == "matched" else eta_d_linear(k)
    return ProblemData(k, ramp_source_1d(), linear([A]), eta_d, gamma)


# --------------------------------------------------------------------------
# Solvers
# --------------------------------------------------------------------------

def _identity_coeff(dim):
    eye = np.eye(dim)
    return lambda P: np.repeat(eye[None], len(P), axis=0)


def _state_system(mesh: Mesh, data: ProblemData, tmap: Optional[TransportMap] = None, s=0.0,
                  dirichlet=("outer",)) -> LinearSystem:
    N = mesh.dim
    if tmap is None:
        return fem.assemble(mesh, data.k, matrix_coeff=_identity_coeff(N),
                            volume_weight=lambda P: np.ones(len(P)),
                            source=data.f.value, dirichlet=dirichlet)
    return fem.assemble(mesh, data.k,
                        matrix_coeff=lambda P: pullback_matrix(tmap, s, P),
                        volume_weight=lambda P: tmap.det(s, P),
                        source=lambda P: data.f.value(transport(tmap, s, P)),
                        dirichlet=dirichlet)


def solve_direct(mesh: Mesh, data: ProblemData) -> FemField:
    """Discrete eta^0 with homogeneous Dirichlet values on the outer boundary."""
    return fem.solve(_state_system(mesh, data))


def solve_direct_pullback(mesh: Mesh, data: ProblemData, tmap: TransportMap, s) -> FemField:
    """Transported state on the fixed mesh: coefficients B(s), J_s and f o T_s."""
    # at s = 0 the coefficients are exactly I, 1 and f, i.e. the unperturbed system
    return fem.solve(_state_system(mesh, data, tmap, s))


def adjoint_rhs(mesh: Mesh, data: ProblemData, eta0: FemField, quad: Optional[Quadrature] = None):
    """Load vector -[2(grad eta0 - A, grad phi) + 2(eta0 - eta_d, phi)]."""
    quad = quad or quadrature(mesh)
    X = quad.points.reshape(-1, mesh.dim)
    m, q = quad.weights.shape
    g = eta0.element_gradients()[:, None, :] - data.target.grad(X).reshape(m, q, mesh.dim)
    v = fem.quad_values(eta0, quad) - data.eta_d.value(X).reshape(m, q)
    return -fem.load_vector(mesh, quad, scalar=2.0 * v, vector=2.0 * g)


def solve_adjoint(mesh: Mesh, data: ProblemData, eta0: FemField) -> FemField:
    if eta0.mesh is not mesh:
        raise MeshError("eta0 must live on the adjoint mesh", operation="solve_adjoint")
    system = _state_system(mesh, data)
    system.rhs = adjoint_rhs(mesh, data, eta0)
    return fem.solve(system)


def indicator_load(mesh: Mesh, func, E: RectifiableSet, r):
    """Vector int_{E_r} func * phi_i, integrating the indicator with refined sub-quadrature.

    Elements inside E_r use the standard rule; elements cut by its boundary
    are integrated piecewise: exactly clipped (4-point Gauss on the piece) in
    1D, subdivided into n^2 sub-triangles of size at most r/16 in 2D.  Either
    way E_r holds at least 8 quadrature points.
    """
    quad = quadrature(mesh)
    out = np.zeros(mesh.n_nodes)
    dist_v, _ = E.distance(mesh.nodes)
    dv = dist_v[mesh.elements]
    inside = np.all(dv <= r, axis=1)
    cut = ~inside & (dv.min(axis=1) <= r + mesh.h)
    if np.any(inside):
        X = quad.points[inside]
        vals = func(X.reshape(-1, mesh.dim)).reshape(X.shape[:2])
        loc = np.einsum("mq,mq,qa->ma", quad.weights[inside], vals, quad.phi)
        np.add.at(out, mesh.elements[inside].reshape(-1), loc.reshape(-1))
    for e in np.flatnonzero(cut):
        pts, wts, bary = _cut_element_rule(mesh, e, E, r)
        if len(pts):
            vals = func(pts)
            out[mesh.elements[e]] += np.einsum("q,q,qa->a", wts, vals, bary)
    return out


def _cut_element_rule(mesh, e, E, r):
    el = mesh.elements[e]
    V = mesh.nodes[el]
    if mesh.dim == 1:
        x0 = float(E.vertices[0, 0])
        a, b = sorted((V[0, 0], V[1, 0]))
        lo, hi = max(a, x0 - r), min(b, x0 + r)
        if hi <= lo:
            return np.zeros((0, 1)), np.zeros(0), np.zeros((0, 2))
        t, w = np.polynomial.legendre.leggauss(4)
        x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        lam1 = (x - V[0, 0]) / (V[1, 0] - V[0, 0])
        bary = np.stack([1 - lam1, lam1], axis=1)
        return x[:, None], 0.5 * (hi - lo) * w, bary
    n = max(2, math.ceil(16 * mesh.h / r))
    n = min(n, 256)
    bary, w = _subdivided_rule(n)
    pts = bary @ V
    d, _ = E.distance(pts)
    keep = d <= r
    return pts[keep], (mesh.volumes[e] * w)[keep], bary[keep]


_SUB_CACHE = {}


def _subdivided_rule(n):
    """Edge-midpoint rule on the n^2 congruent sub-triangles of the reference triangle."""
    if n in _SUB_CACHE:
        return _SUB_CACHE[n]
    pts, wts = [], []
    mid = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    for i in range(n):
        for j in range(n - i):
            tris = [[(i, j), (i + 1, j), (i, j + 1)]]
            if i + j < n - 1:
                tris.append([(i + 1, j), (i + 1, j + 1), (i, j + 1)])
            for tri in tris:
                corners = np.array([[1 - (a + b) / n, a / n, b / n] for a, b in tri])
                pts.append(mid @ corners)
                wts.append(np.full(3, 1.0 / (3 * n * n)))
    out = (np.vstack(pts), np.concatenate(wts))
    _SUB_CACHE[n] = out
    return out


def source_perturbed_system(mesh: Mesh, data: ProblemData, E: RectifiableSet, r) -> LinearSystem:
    system = _state_system(mesh, data)
    if data.gamma != 1.0:
        system.rhs = system.rhs - (1.0 - data.gamma) * indicator_load(mesh, data.f.value, E, r)
    return system


def solve_source_perturbed(mesh: Mesh, data: ProblemData, E: RectifiableSet, r) -> FemField:
    """State with source gamma*f on E_r and f elsewhere."""
    return fem.solve(source_perturbed_system(mesh, data, E, r))


def solve_hole(mesh: Mesh, data: ProblemData, bc="dirichlet") -> FemField:
    if not mesh.has_tag("hole"):
        raise MeshError("mesh has no hole boundary", operation="solve_hole")
    if bc not in ("dirichlet", "neumann"):
        raise ConfigError(f"unknown hole condition {bc!r}")
    tags = ("outer", "hole") if bc == "dirichlet" else ("outer",)
    return fem.solve(_state_system(mesh, data, dirichlet=tags))


def transfer(f: FemField, mesh: Mesh) -> FemField:
    """Nodal interpolation of a field onto another mesh of (part of) the same region."""
    if f.mesh is mesh:
        return f
    same = _match_nodes(f.mesh, mesh)
    values = np.empty(mesh.n_nodes)
    hit = same >= 0
    values[hit] = f.values[same[hit]]
    if np.any(~hit):
        values[~hit] = fem.eval_field(f, mesh.nodes[~hit])[0]
    return FemField(mesh, values)


def _match_nodes(src: Mesh, dst: Mesh, tol=1e-12):
    """For each dst node, the index of a coincident src node or -1."""
    d, idx = cKDTree(src.nodes).query(dst.nodes)
    return np.where(d <= tol * max(1.0, float(np.abs(src.nodes).max())), idx, -1)


def extend_into_hole(eta_r: FemField, hole_mesh: Mesh, data: ProblemData, full_mesh: Mesh) -> FemField:
    """Solve the Helmholtz problem inside E_r with the trace of eta_r, merged on full_mesh."""
    system = _state_system(hole_mesh, data, dirichlet=())
    bnodes = hole_mesh.nodes_with_tag("hole")
    src = _match_nodes(eta_r.mesh, hole_mesh)[bnodes]
    if np.any(src < 0):
        raise MeshError("hole boundary nodes are not shared with the outer mesh", operation="extend_into_hole")
    system.constrained = bnodes
    system.constrained_values = eta_r.values[src]
    inner = fem.solve(system)
    values = np.full(full_mesh.n_nodes, np.nan)
    for part in (eta_r, inner):
        m = _match_nodes(part.mesh, full_mesh)
        hit = m >= 0
        values[hit] = part.values[m[hit]]
    if np.any(np.isnan(values)):
        raise MeshError("merged mesh has nodes outside both parts", operation="extend_into_hole")
    return FemField(full_mesh, values)
