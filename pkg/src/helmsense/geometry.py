"""Domains, velocity fields, perturbation-of-identity transport maps and
rectifiable perturbation sets.

Point arguments follow one convention throughout the package: a single point
is an array of shape ``(N,)`` (or a bare float in 1D) and a batch of points
is ``(n, N)``.  Vectorised callables always receive ``(n, N)`` arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import HelmsenseError, SingularJacobianError

# Volume of the unit ball in R^1 and R^2.
UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi}

SINGULAR_JACOBIAN_TOL = 1e-12


def as_points(X, dim):
    """Return ``(points, single)`` with points shaped ``(n, dim)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        if dim != 1:
            raise ValueError("scalar point given for a 2D quantity")
        return X.reshape(1, 1), True
    if X.ndim == 1:
        if dim == 1 and X.shape[0] != 1:
            return X.reshape(-1, 1), False
        if X.shape[0] != dim:
            raise ValueError(f"point of length {X.shape[0]} in dimension {dim}")
        return X.reshape(1, dim), True
    if X.shape[1] != dim:
        raise ValueError(f"points of shape {X.shape} in dimension {dim}")
    return X, False


def _unbatch(values, single):
    return values[0] if single else values


# --------------------------------------------------------------------------
# Domains
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """An interval, an axis-aligned rectangle or a disk."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "interval":
            a, b = self.params
            if not b > a:
                raise HelmsenseError(f"empty interval ({a}, {b})")
        elif self.kind == "rectangle":
            (x0, y0), (x1, y1) = self.params
            if not (x1 > x0 and y1 > y0):
                raise HelmsenseError("rectangle needs positive side lengths")
        elif self.kind == "disk":
            _, radius = self.params
            if not radius > 0:
                raise HelmsenseError("disk needs a positive radius")
        else:
            raise HelmsenseError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def interval(cls, a, b):
        return cls("interval", (float(a), float(b)))

    @classmethod
    def rectangle(cls, lower, upper):
        return cls("rectangle", (tuple(map(float, lower)), tuple(map(float, upper))))

    @classmethod
    def disk(cls, center, radius):
        return cls("disk", (tuple(map(float, center)), float(radius)))

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def volume(self):
        if self.kind == "interval":
            a, b = self.params
            return b - a
        if self.kind == "rectangle":
            (x0, y0), (x1, y1) = self.params
            return (x1 - x0) * (y1 - y0)
        return math.pi * self.params[1] ** 2

    def boundary_distance(self, X):
        """Distance from interior points to the boundary (negative outside)."""
        P, single = as_points(X, self.dim)
        if self.kind == "interval":
            a, b = self.params
            d = np.minimum(P[:, 0] - a, b - P[:, 0])
        elif self.kind == "rectangle":
            (x0, y0), (x1, y1) = self.params
            d = np.min(np.stack([P[:, 0] - x0, x1 - P[:, 0],
                                 P[:, 1] - y0, y1 - P[:, 1]]), axis=0)
        else:
            c, radius = self.params
            d = radius - np.linalg.norm(P - np.asarray(c), axis=1)
        return _unbatch(d, single)

    def poincare_constant(self):
        """c(Omega) = 1/sqrt(lambda_1) for the Dirichlet Laplacian."""
        if self.kind == "interval":
            a, b = self.params
            return (b - a) / math.pi
        if self.kind == "rectangle":
            (x0, y0), (x1, y1) = self.params
            return 1.0 / (math.pi * math.hypot(1.0 / (x1 - x0), 1.0 / (y1 - y0)))
        # first zero of J_0
        return self.params[1] / 2.404825557695773


# --------------------------------------------------------------------------
# Velocity fields and transport
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityField:
    """A time-independent velocity V with its Jacobian DV.

    ``value`` maps ``(n, N)`` points to ``(n, N)`` vectors, ``jacobian`` maps
    them to ``(n, N, N)`` matrices with ``DV[i, a, b] = dV_a/dx_b``.
    """

    dim: int
    value: Callable
    jacobian: Callable
    name: str = "custom"

    def __call__(self, X):
        P, single = as_points(X, self.dim)
        return _unbatch(np.asarray(self.value(P), dtype=float).reshape(len(P), self.dim), single)

    def jac(self, X):
        P, single = as_points(X, self.dim)
        D = np.asarray(self.jacobian(P), dtype=float).reshape(len(P), self.dim, self.dim)
        return _unbatch(D, single)

    def div(self, X):
        P, single = as_points(X, self.dim)
        return _unbatch(np.trace(self.jac(P), axis1=1, axis2=2), single)

    def check(self, X, step=1e-6):
        """Largest central-difference mismatch between V and DV at ``X``."""
        P, _ = as_points(X, self.dim)
        D = self.jac(P)
        err = 0.0
        for b in range(self.dim):
            e = np.zeros(self.dim)
            e[b] = step
            fd = (self.value(P + e) - self.value(P - e)) / (2 * step)
            err = max(err, float(np.max(np.abs(fd - D[:, :, b]))))
        return err

    def __add__(self, other):
        return VelocityField(
            self.dim,
            lambda P: self.value(P) + other.value(P),
            lambda P: self.jacobian(P) + other.jacobian(P),
            name=f"{self.name}+{other.name}",
        )

    def scaled(self, c):
        return VelocityField(self.dim, lambda P: c * self.value(P),
                             lambda P: c * self.jacobian(P), name=f"{c}*{self.name}")


def zero_field(dim):
    return VelocityField(dim, lambda P: np.zeros_like(P),
                         lambda P: np.zeros((len(P), dim, dim)), name="zero")


def affine_field(M, c=None):
    """V(x) = M x + c."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    dim = M.shape[0]
    c = np.zeros(dim) if c is None else np.asarray(c, dtype=float).reshape(dim)
    return VelocityField(dim, lambda P: P @ M.T + c,
                         lambda P: np.broadcast_to(M, (len(P), dim, dim)).copy(),
                         name="affine")


def dilation_field(dim, center=None):
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    field_ = affine_field(np.eye(dim), -center)
    return VelocityField(dim, field_.value, field_.jacobian, name="dilation")


def rotation_field(center=(0.0, 0.0), omega=1.0):
    cx, cy = center
    M = omega * np.array([[0.0, -1.0], [1.0, 0.0]])
    field_ = affine_field(M, -M @ np.array([cx, cy]))
    return VelocityField(2, field_.value, field_.jacobian, name="rotation")


def bubble_field_1d(a=-1.0, b=1.0, amplitude=1.0):
    """V(x) = amplitude * (x - a)(b - x) / ((b - a)/2)**2; vanishes at a and b.

    On (-1, 1) with unit amplitude this is 1 - x**2.
    """
    scale = amplitude / ((b - a) / 2.0) ** 2
    return VelocityField(
        1,
        lambda P: scale * (P - a) * (b - P),
        lambda P: (scale * (a + b - 2.0 * P)).reshape(-1, 1, 1),
        name="bubble",
    )


def quadratic_field_2d(coeffs):
    """V_a(x) = sum of monomials; ``coeffs[a] = (c, cx, cy, cxx, cxy, cyy)``."""
    C = np.asarray(coeffs, dtype=float).reshape(2, 6)

    def value(P):
        x, y = P[:, 0], P[:, 1]
        basis = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
        return basis @ C.T

    def jacobian(P):
        x, y = P[:, 0], P[:, 1]
        dx = np.stack([np.zeros_like(x), np.ones_like(x), np.zeros_like(x), 2 * x, y, np.zeros_like(x)], axis=1)
        dy = np.stack([np.zeros_like(x), np.zeros_like(x), np.ones_like(x), np.zeros_like(x), x, 2 * y], axis=1)
        return np.stack([dx @ C.T, dy @ C.T], axis=2)

    return VelocityField(2, value, jacobian, name="quadratic")


@dataclass(frozen=True)
class TransportMap:
    """T_s(X) = X + s V(X)."""

    velocity: VelocityField

    @property
    def dim(self):
        return self.velocity.dim

    def __call__(self, s, X):
        return transport(self, s, X)

    def jacobian(self, s, X):
        """DT_s(X) = I + s DV(X)."""
        P, single = as_points(X, self.dim)
        DT = np.eye(self.dim) + s * self.velocity.jac(P)
        return _unbatch(DT, single)

    def det(self, s, X):
        P, single = as_points(X, self.dim)
        return _unbatch(_det(self.jacobian(s, P)), single)

    def max_admissible_s(self, X):
        """Smallest s > 0 at which J_s vanishes at one of the points (inf if none)."""
        P, _ = as_points(X, self.dim)
        D = self.velocity.jac(P)
        if self.dim == 1:
            slope = D[:, 0, 0]
            neg = slope < 0
            return float(np.min(-1.0 / slope[neg])) if np.any(neg) else math.inf
        # det(I + sD) = 1 + s tr D + s^2 det D
        tr = np.trace(D, axis1=1, axis2=2)
        dt = _det(D)
        best = math.inf
        for a2, a1 in zip(dt, tr):
            roots = np.roots([a2, a1, 1.0]) if abs(a2) > 0 else ([-1.0 / a1] if a1 != 0 else [])
            for z in np.atleast_1d(roots):
                if abs(np.imag(z)) < 1e-14 and np.real(z) > 0:
                    best = min(best, float(np.real(z)))
        return best


def _det(M):
    if M.shape[-1] == 1:
        return M[..., 0, 0].copy()
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _adjugate(M):
    if M.shape[-1] == 1:
        return np.ones_like(M)
    adj = np.empty_like(M)
    adj[..., 0, 0] = M[..., 1, 1]
    adj[..., 1, 1] = M[..., 0, 0]
    adj[..., 0, 1] = -M[..., 0, 1]
    adj[..., 1, 0] = -M[..., 1, 0]
    return adj


def transport(tmap: TransportMap, s, X):
    """X + s V(X); exactly X at s = 0."""
    if s < 0:
        raise ValueError("transport parameter s must be nonnegative")
    P, single = as_points(X, tmap.dim)
    if s == 0:
        return _unbatch(P.copy(), single)
    return _unbatch(P + s * tmap.velocity(P), single)


def pullback_matrix(tmap: TransportMap, s, X):
    """B(s) = det(DT_s) DT_s^{-1} DT_s^{-T}.

    Uses the adjugate form ``adj(DT) adj(DT)^T / det(DT)`` which is exact at
    s = 0 and symmetric by construction.
    """
    P, single = as_points(X, tmap.dim)
    DT = np.eye(tmap.dim) + s * tmap.velocity.jac(P)
    J = _det(DT)
    if np.any(np.abs(J) < SINGULAR_JACOBIAN_TOL):
        raise SingularJacobianError(f"det DT_s vanishes at s={s}", operation="pullback_matrix")
    adj = _adjugate(DT)
    B = np.einsum("nij,nkj->nik", adj, adj) / J[:, None, None]
    return _unbatch(B, single)


def b_prime_zero(tmap: TransportMap, X):
    """d/ds B(s) at s = 0: div V I - DV - DV^T."""
    P, single = as_points(X, tmap.dim)
    D = tmap.velocity.jac(P)
    div = np.trace(D, axis1=1, axis2=2)
    Bp = div[:, None, None] * np.eye(tmap.dim) - D - np.swapaxes(D, 1, 2)
    return _unbatch(Bp, single)


# --------------------------------------------------------------------------
# Rectifiable sets
# --------------------------------------------------------------------------

# 3-point Gauss-Legendre on [0, 1]
_GL3_T = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL3_W = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True)
class RectifiableSet:
    """A point (d = 0) or a polyline (d = 1) embedded in R^N."""

    vertices: np.ndarray = field(repr=False)
    d: int

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if self.d == 0 and len(V) != 1:
            raise HelmsenseError("a 0-dimensional set is a single point")
        if self.d == 1:
            if len(V) < 2:
                raise HelmsenseError("a polyline needs at least two vertices")
            if np.any(np.linalg.norm(np.diff(V, axis=0), axis=1) <= 0):
                raise HelmsenseError("polyline has a zero-length segment")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @classmethod
    def point(cls, x0):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return cls(x0.reshape(1, -1), 0)

    @classmethod
    def polyline(cls, vertices):
        return cls(np.asarray(vertices, dtype=float), 1)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def center(self):
        return self.vertices[0] if self.d == 0 else self.vertices.mean(axis=0)

    def measure(self):
        """H^d(E): 1 for a point, total length for a polyline."""
        if self.d == 0:
            return 1.0
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def reach(self):
        """Reach for the built-in convex shapes; None when not known."""
        if self.d == 0 or len(self.vertices) == 2:
            return math.inf
        return None

    def scale(self, r, N=None):
        """s = alpha_{N-d} r^{N-d}."""
        N = self.dim if N is None else N
        return UNIT_BALL_VOLUME[N - self.d] * r ** (N - self.d)

    def dilation_volume(self, r):
        """|E_r| by the Steiner formula (valid for r below the reach)."""
        N = self.dim
        if self.d == 0:
            return UNIT_BALL_VOLUME[N] * r ** N
        if self.reach() is None:
            raise HelmsenseError("dilation volume is only known for a point or a single segment")
        return 2.0 * r * self.measure() + math.pi * r * r

    def project(self, X):
        P, single = as_points(X, self.dim)
        if self.d == 0:
            proj = np.broadcast_to(self.vertices[0], P.shape).copy()
        else:
            best = np.full(len(P), np.inf)
            proj = np.empty_like(P)
            for a, b in zip(self.vertices[:-1], self.vertices[1:]):
                ab = b - a
                t = np.clip((P - a) @ ab / (ab @ ab), 0.0, 1.0)
                q = a + t[:, None] * ab
                dist = np.linalg.norm(P - q, axis=1)
                closer = dist < best
                best[closer] = dist[closer]
                proj[closer] = q[closer]
        return _unbatch(proj, single)

    def distance(self, X):
        """(d_E(x), grad d_E(x)); the gradient is zero on E itself."""
        P, single = as_points(X, self.dim)
        proj = self.project(P)
        diff = P - proj
        dist = np.linalg.norm(diff, axis=1)
        grad = np.zeros_like(P)
        pos = dist > 0
        grad[pos] = diff[pos] / dist[pos, None]
        return _unbatch(dist, single), _unbatch(grad, single)

    def hd_integral(self, g):
        """Integral of a vectorised ``g`` over E against H^d."""
        if self.d == 0:
            return float(np.asarray(g(self.vertices)).reshape(-1)[0])
        total = 0.0
        for a, b in zip(self.vertices[:-1], self.vertices[1:]):
            pts = a + _GL3_T[:, None] * (b - a)
            vals = np.asarray(g(pts), dtype=float).reshape(-1)
            total += np.linalg.norm(b - a) * float(_GL3_W @ vals)
        return total

    def dilation_boundary(self, r, h):
        """Counter-clockwise polygon approximating the boundary of E_r (2D only).

        A point gives an inscribed regular polygon with max(16, ceil(2 pi r/h))
        sides.  A single segment gives a stadium: two inscribed half circles
        joined by straight sides subdivided at spacing about h.
        """
        if self.dim != 2:
            raise HelmsenseError("dilation boundary polygons are 2D only")
        if self.d == 0:
            n = max(16, math.ceil(2 * math.pi * r / h))
            theta = 2 * math.pi * np.arange(n) / n
            return self.vertices[0] + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        if len(self.vertices) != 2:
            raise HelmsenseError("hole meshing supports points and single segments only")
        a, b = self.vertices
        t = (b - a) / np.linalg.norm(b - a)
        nrm = np.array([t[1], -t[0]])
        n_arc = max(8, math.ceil(math.pi * r / h))
        n_side = max(1, math.ceil(np.linalg.norm(b - a) / h))

        def cap(center, start):
            phi = math.atan2(start[1], start[0])
            return [center + r * np.array([math.cos(phi + math.pi * i / n_arc),
                                           math.sin(phi + math.pi * i / n_arc)])
                    for i in range(n_arc + 1)]

        pts = cap(b, nrm)
        pts += [b - nrm * r - (b - a) * j / n_side for j in range(1, n_side)]
        pts += cap(a, -nrm)
        pts += [a + nrm * r + (b - a) * j / n_side for j in range(1, n_side)]
        poly = np.array(pts)
        area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
        return poly if area > 0 else poly[::-1].copy()
