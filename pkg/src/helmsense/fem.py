"""Continuous P1 finite elements for -div(C grad u) - k^2 w u = w f.

Quadrature is fixed per dimension (two-point Gauss on segments, edge
midpoints on triangles) so that every module integrates with the same rule
and discrete identities between them hold to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (sp.linalg.norm)
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .errors import NumericalError, PointOutsideMeshError, ResonanceError, UnknownTagError
from .geometry import as_points, _unbatch
from .mesh import TAGS, Mesh

PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12
LOCATE_TOL = 1e-10
DENSE_EIG_LIMIT = 300
REFINEMENT_STEPS = 3


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

def _rule(dim, high=False):
    """Barycentric points (q, dim+1) and weights (q,) summing to one."""
    if dim == 1:
        n = 5 if high else 2
        t, w = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (t + 1.0)
        return np.stack([1.0 - t, t], axis=1), 0.5 * w
    if not high:
        bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return bary, np.full(3, 1.0 / 3.0)
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    bary = np.array([[1 / 3, 1 / 3, 1 / 3],
                     [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
                     [a2, b2, b2], [b2, a2, b2], [b2, b2, a2]])
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    return bary, w


@dataclass(frozen=True, eq=False)
class Quadrature:
    points: np.ndarray   # (m, q, N)
    weights: np.ndarray  # (m, q), element volume included
    phi: np.ndarray      # (q, N+1) basis values


def quadrature(mesh: Mesh, high=False) -> Quadrature:
    bary, w = _rule(mesh.dim, high)
    X = np.einsum("qa,mad->mqd", bary, mesh.nodes[mesh.elements])
    return Quadrature(X, mesh.volumes[:, None] * w[None, :], bary)


def _at_points(func, X, shape_tail=()):
    """Evaluate a pointwise callable on an (m, q, N) array of points."""
    m, q, N = X.shape
    vals = np.asarray(func(X.reshape(-1, N)), dtype=float)
    return vals.reshape((m, q) + shape_tail)


# --------------------------------------------------------------------------
# Fields
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FemField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if len(v) != self.mesh.n_nodes:
            raise ValueError(f"field has {len(v)} coefficients for {self.mesh.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise NumericalError("field coefficients must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def _other(self, other):
        if isinstance(other, FemField):
            if other.mesh is not self.mesh:
                raise ValueError("fields live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return FemField(self.mesh, self.values + self._other(other))

    def __sub__(self, other):
        return FemField(self.mesh, self.values - self._other(other))

    def __mul__(self, c):
        return FemField(self.mesh, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return FemField(self.mesh, -self.values)

    def __truediv__(self, c):
        return FemField(self.mesh, self.values / c)

    def element_gradients(self):
        """Constant gradient on each element, shape (m, N)."""
        return np.einsum("mad,ma->md", self.mesh.basis_gradients, self.values[self.mesh.elements])

    def at_quadrature(self, quad: Quadrature):
        return quad.phi @ self.values[self.mesh.elements].T  # (q, m)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("node_index,value\n")
            for i, v in enumerate(self.values):
                fh.write(f"{i},{v:.17g}\n")

    @classmethod
    def from_csv(cls, mesh, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        values = np.empty(mesh.n_nodes)
        values[data[:, 0].astype(int)] = data[:, 1]
        return cls(mesh, values)


def quad_values(field: FemField, quad: Quadrature):
    """Field values at quadrature points, shape (m, q)."""
    return field.values[field.mesh.elements] @ quad.phi.T


def interpolate(mesh: Mesh, func) -> FemField:
    return FemField(mesh, np.asarray(func(mesh.nodes), dtype=float).reshape(-1))


def zero_field(mesh: Mesh) -> FemField:
    return FemField(mesh, np.zeros(mesh.n_nodes))


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------

@dataclass(eq=False)
class LinearSystem:
    mesh: Mesh
    k: float
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    constrained_values: np.ndarray = None

    def __post_init__(self):
        self.constrained = np.unique(np.asarray(self.constrained, dtype=np.int64))
        if self.constrained_values is None:
            self.constrained_values = np.zeros(len(self.constrained))
        A = self.matrix
        scale = max(abs(A).max(), 1e-300)
        if abs(A - A.T).max() > SYMMETRY_TOL * scale:
            raise NumericalError("assembled matrix is not symmetric", operation="assemble")

    @property
    def matrix(self):
        return (self.stiffness - self.k ** 2 * self.mass).tocsr()

    def constrain(self, tags=("outer",), values=0.0):
        """Mark every node on the given boundary tags as Dirichlet.

        ``values`` is a constant or a callable of the node coordinates.
        """
        nodes = [self.mesh.nodes_with_tag(t) for t in tags if self.mesh.has_tag(t)]
        new = np.unique(np.concatenate(nodes)) if nodes else np.array([], dtype=np.int64)
        vals = (np.asarray(values(self.mesh.nodes[new]), dtype=float).reshape(len(new)) if callable(values)
                else np.full(len(new), float(values)))
        old = dict(zip(self.constrained.tolist(), self.constrained_values.tolist()))
        old.update(zip(new.tolist(), vals.tolist()))
        self.constrained = np.array(sorted(old), dtype=np.int64)
        self.constrained_values = np.array([old[i] for i in self.constrained.tolist()], dtype=float)
        return self

    def free(self):
        mask = np.ones(self.mesh.n_nodes, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)


def _scatter(mesh, local):
    """Sum element matrices (m, a, a) into a CSR matrix in element order."""
    el = mesh.elements
    nv = el.shape[1]
    rows = np.repeat(el, nv, axis=1).reshape(-1)
    cols = np.tile(el, (1, nv)).reshape(-1)
    A = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return A.tocsr()


def load_vector(mesh: Mesh, quad: Quadrature, scalar=None, vector=None):
    """Vector with entries int scalar*phi_i + vector.grad(phi_i).

    ``scalar`` has shape (m, q) and ``vector`` (m, q, N); both are sampled at
    the quadrature points of ``quad``.
    """
    local = np.zeros(mesh.elements.shape)
    if scalar is not None:
        local += np.einsum("mq,mq,qa->ma", quad.weights, scalar, quad.phi)
    if vector is not None:
        local += np.einsum("mq,mqd,mad->ma", quad.weights, vector, mesh.basis_gradients)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements.reshape(-1), local.reshape(-1))
    return out


def assemble(mesh: Mesh, k, matrix_coeff=None, volume_weight=None, source=None,
             dirichlet=("outer",), quad=None) -> LinearSystem:
    """Assemble stiffness, mass and load with pointwise coefficients.

    ``matrix_coeff`` maps points (n, N) to matrices (n, N, N), default I;
    ``volume_weight`` weights the mass term and the load, default 1;
    ``source`` maps points to the load density, default 0.
    """
    if k < 0:
        raise ValueError("wavenumber must be nonnegative")
    quad = quad or quadrature(mesh)
    X = quad.points
    G = mesh.basis_gradients
    N = mesh.dim
    if matrix_coeff is None:
        K_loc = np.einsum("m,mad,mbd->mab", quad.weights.sum(axis=1), G, G)
    else:
        C = _at_points(matrix_coeff, X, (N, N))
        K_loc = np.einsum("mq,mad,mqde,mbe->mab", quad.weights, G, C, G)
    w = np.ones(quad.weights.shape) if volume_weight is None else _at_points(volume_weight, X)
    M_loc = np.einsum("mq,mq,qa,qb->mab", quad.weights, w, quad.phi, quad.phi)
    rhs = np.zeros(mesh.n_nodes)
    if source is not None:
        rhs = load_vector(mesh, quad, scalar=w * _at_points(source, X))
    system = LinearSystem(mesh, float(k), _scatter(mesh, K_loc), _scatter(mesh, M_loc), rhs)
    if dirichlet:
        system.constrain(dirichlet)
    return system


# --------------------------------------------------------------------------
# Solve
# --------------------------------------------------------------------------

def _factorize(A):
    return splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                options={"SymmetricMode": True})


def _nearest_eigenvalue(K, M, sigma, lu):
    """Generalized eigenvalue of (K, M) closest to sigma."""
    n = K.shape[0]
    if n <= DENSE_EIG_LIMIT:
        lam = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True)
        return float(lam[np.argmin(np.abs(lam - sigma))])
    op = LinearOperator((n, n), matvec=lu.solve, dtype=float)
    lam = eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=sigma, OPinv=op, which="LM",
                return_eigenvectors=False, tol=1e-10, maxiter=2000)
    return float(lam[0])


def check_resonance(system: LinearSystem, lu=None, pivot_tol=PIVOT_TOL):
    """Raise ResonanceError when k^2 is numerically a discrete Dirichlet eigenvalue."""
    free = system.free()
    A = system.matrix[free][:, free]
    if lu is None:
        lu = _factorize(A)
    d = np.abs(lu.U.diagonal())
    if d.size == 0:
        return lu
    if d.min() <= pivot_tol * d.max():
        raise ResonanceError(f"pivot ratio {d.min() / d.max():.3e} below {pivot_tol:g} at k={system.k:g}",
                             operation="solve")
    if system.k > 0:
        K = system.stiffness[free][:, free]
        M = system.mass[free][:, free]
        sigma = system.k ** 2
        lam = _nearest_eigenvalue(K, M, sigma, lu)
        tol = max(abs(lam) * system.mesh.h ** 2 / 4.0, 1e-10)
        if abs(lam - sigma) <= tol * abs(lam):
            raise ResonanceError(f"k^2={sigma:.6g} within discretization tolerance of eigenvalue {lam:.6g}",
                                 operation="solve")
    return lu


def solve(system: LinearSystem, pivot_tol=PIVOT_TOL, spectral_check=True) -> FemField:
    """Eliminate Dirichlet rows/columns, factorize, solve and verify the residual."""
    n = system.mesh.n_nodes
    free = system.free()
    u = np.zeros(n)
    u[system.constrained] = system.constrained_values
    if free.size == 0:
        return FemField(system.mesh, u)
    A = system.matrix
    A_ff = A[free][:, free]
    b = system.rhs[free] - A[free][:, system.constrained] @ u[system.constrained]
    try:
        lu = _factorize(A_ff)
    except RuntimeError as exc:  # exactly singular
        raise ResonanceError(str(exc), operation="solve") from exc
    d = np.abs(lu.U.diagonal())
    if d.min() <= pivot_tol * d.max():
        raise ResonanceError(f"pivot ratio {d.min() / d.max():.3e} below {pivot_tol:g} at k={system.k:g}",
                             operation="solve")
    if spectral_check:
        check_resonance(system, lu, pivot_tol)
    x = lu.solve(b)
    nb = np.linalg.norm(b)
    if nb > 0:
        # normwise backward error; refine with the same factors if needed
        nA = sp.linalg.norm(A_ff, np.inf)
        for _ in range(REFINEMENT_STEPS + 1):
            r = b - A_ff @ x
            res = np.linalg.norm(r) / (nb + nA * np.linalg.norm(x))
            if res <= RESIDUAL_TOL:
                break
            x = x + lu.solve(r)
        if not res <= RESIDUAL_TOL:
            raise NumericalError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}", operation="solve")
    u[free] = x
    return FemField(system.mesh, u)


# --------------------------------------------------------------------------
# Point evaluation
# --------------------------------------------------------------------------

def _barycentric(mesh, elems, p):
    x0 = mesh.nodes[mesh.elements[elems, 0]]
    lam_rest = np.einsum("cij,cj->ci", mesh.basis_gradients[elems, 1:], p - x0)
    return np.concatenate([1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest], axis=1)


def containing_elements(mesh: Mesh, p):
    """All elements containing point p with their barycentric coordinates."""
    kq = min(16, mesh.n_elements)
    _, cand = mesh.centroid_tree.query(p, k=kq)
    cand = np.atleast_1d(cand)
    lam = _barycentric(mesh, cand, np.broadcast_to(p, (len(cand), mesh.dim)))
    ok = np.all(lam >= -LOCATE_TOL, axis=1)
    if not np.any(ok):
        cand = np.arange(mesh.n_elements)
        lam = _barycentric(mesh, cand, np.broadcast_to(p, (len(cand), mesh.dim)))
        ok = np.all(lam >= -LOCATE_TOL, axis=1)
        if not np.any(ok):
            raise PointOutsideMeshError(f"point {p.tolist()} is not in the mesh", operation="eval")
    return cand[ok], lam[ok]


def eval_field(field: FemField, X):
    """Value and gradient at the point(s) X.

    At points shared by several elements the (element-constant) gradient is
    averaged over all of them.
    """
    mesh = field.mesh
    P, single = as_points(X, mesh.dim)
    vals = np.empty(len(P))
    grads = np.empty((len(P), mesh.dim))
    eg = field.element_gradients()
    for i, p in enumerate(P):
        elems, lam = containing_elements(mesh, p)
        vals[i] = lam[0] @ field.values[mesh.elements[elems[0]]]
        grads[i] = eg[elems].mean(axis=0)
    return _unbatch(vals, single), _unbatch(grads, single)


# the spec-facing name
eval = eval_field  # noqa: A001


# --------------------------------------------------------------------------
# Norms and integrals
# --------------------------------------------------------------------------

def norms(field: FemField, restriction=None):
    """(L2 norm, H1 seminorm), exact for P1, optionally over one element region."""
    mesh = field.mesh
    mask = mesh.element_mask(restriction)
    N = mesh.dim
    Mref = (np.ones((N + 1, N + 1)) + np.eye(N + 1)) / ((N + 1) * (N + 2))
    U = field.values[mesh.elements[mask]]
    vol = mesh.volumes[mask]
    l2 = float(np.sum(vol * np.einsum("ma,ab,mb->m", U, Mref, U)))
    g = field.element_gradients()[mask]
    h1 = float(np.sum(vol * np.sum(g * g, axis=1)))
    return math.sqrt(max(l2, 0.0)), math.sqrt(h1)


def error_norms(field: FemField, exact, exact_grad, restriction=None):
    """(L2, H1-seminorm) distance to an exact solution, with a higher-order rule."""
    mesh = field.mesh
    mask = mesh.element_mask(restriction)
    quad = quadrature(mesh, high=True)
    X = quad.points[mask]
    W = quad.weights[mask]
    uh = quad_values(field, quad)[mask]
    gh = field.element_gradients()[mask]
    e0 = _at_points(exact, X) - uh
    e1 = _at_points(exact_grad, X, (mesh.dim,)) - gh[:, None, :]
    return math.sqrt(float(np.sum(W * e0 ** 2))), math.sqrt(float(np.sum(W * np.sum(e1 ** 2, axis=2))))


def integrate(mesh: Mesh, func, restriction=None, high=False):
    """Integral of a pointwise callable with the element quadrature."""
    quad = quadrature(mesh, high)
    mask = mesh.element_mask(restriction)
    return float(np.sum(quad.weights[mask] * _at_points(func, quad.points[mask])))


_EDGE_T = 0.5 + 0.5 * np.array([-1.0, 1.0]) / math.sqrt(3.0)


def boundary_integral(field_a: FemField, weight, tag) -> float:
    """Integral of weight * field_a over the facets carrying ``tag``.

    In 1D the facets are points and the integral is the plain H^0 sum of
    the integrand at those points; orientation signs belong in ``weight``.
    """
    mesh = field_a.mesh
    if tag not in TAGS or not mesh.has_tag(tag):
        raise UnknownTagError(f"no boundary facets tagged {tag!r}", operation="boundary_integral")
    facets = mesh.bfacets[mesh.btags == tag]
    if mesh.dim == 1:
        idx = facets[:, 0]
        w = np.asarray(weight(mesh.nodes[idx]), dtype=float).reshape(-1)
        return float(np.sum(w * field_a.values[idx]))
    A = mesh.nodes[facets[:, 0]]
    B = mesh.nodes[facets[:, 1]]
    length = np.linalg.norm(B - A, axis=1)
    total = 0.0
    for t in _EDGE_T:
        P = (1 - t) * A + t * B
        u = (1 - t) * field_a.values[facets[:, 0]] + t * field_a.values[facets[:, 1]]
        w = np.asarray(weight(P), dtype=float).reshape(-1)
        total += float(np.sum(0.5 * length * w * u))
    return total
