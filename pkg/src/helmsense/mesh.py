"""Simplicial meshes of intervals, rectangles and disks, optionally with a hole.

Boundary facets carry one of two tags, ``"outer"`` (the boundary of the
domain) or ``"hole"`` (the boundary of the dilation E_r).  Elements carry a
region tag, ``"bulk"`` or ``"hole"``; the latter only appears in meshes that
also triangulate the inside of the hole.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, cKDTree

from .errors import HoleTooCloseError, MeshError
from .geometry import Domain, RectifiableSet

MIN_ELEMENT_VOLUME = 1e-14
TAGS = ("outer", "hole")


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    bfacets: np.ndarray
    btags: np.ndarray
    h: float
    regions: np.ndarray = field(default=None)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes.reshape(-1, 1)
        elements = np.array(self.elements, dtype=np.int64)
        bfacets = np.array(self.bfacets, dtype=np.int64).reshape(len(self.btags), -1)
        btags = np.array(self.btags, dtype=object)
        regions = (np.full(len(elements), "bulk", dtype=object) if self.regions is None
                   else np.array(self.regions, dtype=object))
        for arr in (nodes, elements, bfacets, btags, regions):
            arr.setflags(write=False)
        for name, arr in (("nodes", nodes), ("elements", elements), ("bfacets", bfacets),
                          ("btags", btags), ("regions", regions)):
            object.__setattr__(self, name, arr)
        self._validate()

    # -- basic properties -------------------------------------------------

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def _validate(self):
        N = self.dim
        if self.elements.shape[1] != N + 1:
            raise MeshError(f"{N}D mesh needs {N + 1} nodes per element")
        if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
            raise MeshError("element references a missing node")
        vol = self.signed_volumes
        if N == 2 and np.any(vol <= 0):
            raise MeshError("triangles must be positively oriented")
        if np.any(np.abs(vol) <= MIN_ELEMENT_VOLUME):
            raise MeshError("degenerate element")
        for tag in self.btags:
            if tag not in TAGS:
                raise MeshError(f"unknown boundary tag {tag!r}")
        topo = {tuple(sorted(f)) for f in self._topological_boundary()}
        tagged = [tuple(sorted(f)) for f in self.bfacets]
        if len(set(tagged)) != len(tagged) or set(tagged) != topo:
            raise MeshError("tagged boundary facets do not match the mesh boundary")

    @cached_property
    def signed_volumes(self):
        X = self.nodes[self.elements]
        if self.dim == 1:
            return X[:, 1, 0] - X[:, 0, 0]
        e1 = X[:, 1] - X[:, 0]
        e2 = X[:, 2] - X[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def volumes(self):
        return np.abs(self.signed_volumes)

    @cached_property
    def basis_gradients(self):
        """Constant gradients of the barycentric basis, shape (m, N+1, N)."""
        X = self.nodes[self.elements]
        T = np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)  # columns x_i - x_0
        Tinv = np.linalg.inv(T)
        G = np.empty((self.n_elements, self.dim + 1, self.dim))
        G[:, 1:] = Tinv
        G[:, 0] = -Tinv.sum(axis=1)
        return G

    def _local_facets(self):
        if self.dim == 1:
            return [(0,), (1,)]
        return [(0, 1), (1, 2), (2, 0)]

    def _facet_table(self):
        table = {}
        for e, el in enumerate(self.elements):
            for loc in self._local_facets():
                key = tuple(sorted(int(el[i]) for i in loc))
                table.setdefault(key, []).append(e)
        return table

    def _topological_boundary(self):
        return [k for k, v in self._facet_table().items() if len(v) == 1]

    @cached_property
    def facet_elements(self):
        """Index of the unique element adjacent to each boundary facet."""
        table = self._facet_table()
        return np.array([table[tuple(sorted(f))][0] for f in self.bfacets], dtype=np.int64)

    @cached_property
    def centroid_tree(self):
        return cKDTree(self.nodes[self.elements].mean(axis=1))

    def nodes_with_tag(self, tag):
        if tag not in TAGS:
            raise MeshError(f"unknown boundary tag {tag!r}")
        return np.unique(self.bfacets[self.btags == tag])

    def has_tag(self, tag):
        return bool(np.any(self.btags == tag))

    def element_mask(self, restriction=None):
        if restriction is None:
            return np.ones(self.n_elements, dtype=bool)
        return self.regions == restriction

    def check_components(self):
        """Every connected component must touch the outer boundary."""
        m, nv = self.elements.shape
        rows = np.repeat(self.elements[:, 0], nv)
        cols = self.elements.reshape(-1)
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        n_comp, labels = connected_components(graph, directed=False)
        outer = labels[self.nodes_with_tag("outer")] if self.has_tag("outer") else np.array([], int)
        used = np.unique(labels[self.elements.reshape(-1)])
        if not set(used.tolist()) <= set(np.unique(outer).tolist()):
            raise MeshError("mesh has a component that does not reach the outer boundary")
        return n_comp


def _orient(nodes, tris):
    tris = np.array(tris, dtype=np.int64)
    X = nodes[tris]
    e1 = X[:, 1] - X[:, 0]
    e2 = X[:, 2] - X[:, 0]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _boundary_edges(tris):
    count = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    return [k for k, c in count.items() if c == 1]


def _mesh_size(nodes, elements):
    X = nodes[elements]
    n = elements.shape[1]
    h = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            h = max(h, float(np.max(np.linalg.norm(X[:, i] - X[:, j], axis=1))))
    return h


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

def _interval_nodes(a, b, h):
    n = max(1, math.ceil((b - a) / h - 1e-12))
    x = np.linspace(a, b, n + 1)
    x[0], x[-1] = a, b
    return x


def _interval_mesh(xs_parts, tags):
    """Join consecutive node arrays of interval pieces into one 1D mesh."""
    nodes, elements, offset = [], [], 0
    for xs in xs_parts:
        nodes.append(xs)
        idx = np.arange(len(xs)) + offset
        elements.append(np.stack([idx[:-1], idx[1:]], axis=1))
        offset += len(xs)
    nodes = np.concatenate(nodes).reshape(-1, 1)
    elements = np.concatenate(elements)
    return nodes, elements


def _rectangle_grid(domain, h):
    (x0, y0), (x1, y1) = domain.params
    nx = max(1, math.ceil((x1 - x0) / h - 1e-12))
    ny = max(1, math.ceil((y1 - y0) / h - 1e-12))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([X.ravel(), Y.ravel()], axis=1), nx, ny


def _disk_nodes(domain, h):
    c, R = domain.params
    m = max(2, math.ceil(R / h - 1e-12))
    pts = [np.array(c)]
    for j in range(1, m + 1):
        rho = R * j / m
        n = max(6, math.ceil(2 * math.pi * rho / h))
        theta = 2 * math.pi * np.arange(n) / n + (0.5 * math.pi / n) * (j % 2)
        pts.append(np.asarray(c) + rho * np.stack([np.cos(theta), np.sin(theta)], axis=1))
    return np.vstack([np.atleast_2d(p) for p in pts]), m


def _background_nodes(domain, h):
    if domain.kind == "rectangle":
        return _rectangle_grid(domain, h)[0]
    return _disk_nodes(domain, h)[0]


def _outer_facets(nodes, tris, hole_nodes=frozenset()):
    facets, tags = [], []
    for a, b in _boundary_edges(tris):
        facets.append((a, b))
        tags.append("hole" if (a in hole_nodes and b in hole_nodes) else "outer")
    return facets, tags


def _check_clearance(domain, E, r, h):
    if r <= 0:
        raise MeshError("hole radius must be positive")
    if E.dim != domain.dim:
        raise MeshError("perturbation set and domain dimensions differ")
    clearance = float(np.min(domain.boundary_distance(E.vertices))) - r
    if clearance < h:
        raise HoleTooCloseError(f"clearance {clearance:.3g} between E_r and the boundary is below h={h}",
                                operation="generate_mesh")


def generate_mesh(domain: Domain, h: float, hole=None) -> Mesh:
    """Conforming mesh of the domain, or of Omega minus E_r when ``hole=(E, r)``."""
    if not h > 0:
        raise MeshError(f"invalid mesh size h={h}", operation="generate_mesh")
    if hole is not None:
        return hole_meshes(domain, h, *hole)[0]
    if domain.kind == "interval":
        a, b = domain.params
        nodes, elements = _interval_mesh([_interval_nodes(a, b, h)], None)
        bf = [[0], [len(nodes) - 1]]
        return Mesh(nodes, elements, bf, ["outer", "outer"], _mesh_size(nodes, elements))
    if domain.kind == "rectangle":
        nodes, nx, ny = _rectangle_grid(domain, h)
        tris = []
        for j in range(ny):
            for i in range(nx):
                p = j * (nx + 1) + i
                q = p + nx + 1
                tris.append((p, p + 1, q + 1))
                tris.append((p, q + 1, q))
        tris = _orient(nodes, tris)
    else:
        nodes, _ = _disk_nodes(domain, h)
        tris = _orient(nodes, Delaunay(nodes).simplices)
    facets, tags = _outer_facets(nodes, tris)
    return Mesh(nodes, tris, facets, tags, _mesh_size(nodes, tris))


def hole_meshes(domain: Domain, h: float, E: RectifiableSet, r: float):
    """Meshes of Omega_r, of the open hole E_r and of their union.

    The three meshes share the nodes on the hole boundary, so fields on the
    union restrict exactly to the other two.  Returns ``(outer, inner, full)``.
    """
    if not h > 0:
        raise MeshError(f"invalid mesh size h={h}", operation="generate_mesh")
    _check_clearance(domain, E, r, h)
    if domain.dim == 1:
        return _hole_meshes_1d(domain, h, E, r)
    return _hole_meshes_2d(domain, h, E, r)


def _hole_meshes_1d(domain, h, E, r):
    if E.d != 0:
        raise MeshError("1D perturbation sets are points")
    a, b = domain.params
    x0 = float(E.vertices[0, 0])
    left = _interval_nodes(a, x0 - r, h)
    right = _interval_nodes(x0 + r, b, h)
    n_in = max(2, math.ceil(2 * r / h - 1e-12))
    n_in += n_in % 2  # keep x0 as a node
    middle = np.linspace(x0 - r, x0 + r, n_in + 1)
    middle[n_in // 2] = x0
    middle[0], middle[-1] = left[-1], right[0]

    nodes, elements = _interval_mesh([left, right], None)
    nl = len(left)
    outer = Mesh(nodes, elements, [[0], [nl - 1], [nl], [len(nodes) - 1]],
                 ["outer", "hole", "hole", "outer"], _mesh_size(nodes, elements))

    nodes_i, elements_i = _interval_mesh([middle], None)
    inner = Mesh(nodes_i, elements_i, [[0], [len(middle) - 1]], ["hole", "hole"],
                 _mesh_size(nodes_i, elements_i), regions=["hole"] * len(elements_i))

    full_x = np.concatenate([left, middle[1:-1], right])
    nodes_f, elements_f = _interval_mesh([full_x], None)
    xm = nodes_f[elements_f].mean(axis=1)[:, 0]
    regions = np.where(np.abs(xm - x0) < r, "hole", "bulk")
    full = Mesh(nodes_f, elements_f, [[0], [len(full_x) - 1]], ["outer", "outer"],
                _mesh_size(nodes_f, elements_f), regions=regions)
    return outer, inner, full


def _hole_meshes_2d(domain, h, E, r):
    poly = E.dilation_boundary(r, h)
    n_poly = len(poly)
    back = _background_nodes(domain, h)
    dist, _ = E.distance(back)
    keep_out = back[dist > r + 0.5 * h]
    keep_in = back[dist < r - 0.5 * h]

    # helpers on E make the Delaunay fan inside the hole unique
    if E.d == 0:
        helpers = E.vertices.copy()
    else:
        a, b = E.vertices
        n = max(1, math.ceil(np.linalg.norm(b - a) / h))
        helpers = a + np.linspace(0, 1, n + 1)[:, None] * (b - a)

    # Omega_r: polygon nodes first, then background nodes outside the band
    pts = np.vstack([poly, keep_out, helpers])
    n_real = n_poly + len(keep_out)
    tris = Delaunay(pts).simplices
    inside = np.all((tris < n_poly) | (tris >= n_real), axis=1)
    tris = tris[~inside]
    if np.any(tris >= n_real):
        raise MeshError("hole band triangulation reached the hole interior")
    nodes = pts[:n_real]
    tris = _orient(nodes, tris)
    poly_nodes = frozenset(range(n_poly))
    facets, tags = _outer_facets(nodes, tris, poly_nodes)
    _require_polygon_edges(facets, tags, n_poly)
    outer = Mesh(nodes, tris, facets, tags, _mesh_size(nodes, tris))
    outer.check_components()

    # open hole: polygon nodes first, then interior nodes
    pts_i = np.vstack([poly, keep_in, helpers])
    dist_i, _ = E.distance(pts_i)
    pts_i = np.vstack([poly, pts_i[n_poly:][dist_i[n_poly:] < r - 1e-9 * max(r, 1.0)]])
    pts_i = _unique_rows(pts_i, n_poly)
    tris_i = _orient(pts_i, Delaunay(pts_i).simplices)
    facets_i, _ = _outer_facets(pts_i, tris_i, frozenset(range(n_poly)))
    _require_polygon_edges(facets_i, ["hole"] * len(facets_i), n_poly)
    inner = Mesh(pts_i, tris_i, facets_i, ["hole"] * len(facets_i), _mesh_size(pts_i, tris_i),
                 regions=["hole"] * len(tris_i))

    # union, identifying the shared polygon nodes
    n_out = len(nodes)
    remap = np.concatenate([np.arange(n_poly), n_out + np.arange(len(pts_i) - n_poly)])
    nodes_f = np.vstack([nodes, pts_i[n_poly:]])
    tris_f = np.vstack([tris, remap[tris_i]])
    regions = ["bulk"] * len(tris) + ["hole"] * len(tris_i)
    facets_f = [f for f, t in zip(facets, tags) if t == "outer"]
    full = Mesh(nodes_f, tris_f, facets_f, ["outer"] * len(facets_f),
                _mesh_size(nodes_f, tris_f), regions=regions)
    return outer, inner, full


def _unique_rows(pts, keep_first):
    tree = cKDTree(pts)
    drop = set()
    for i, j in sorted(tree.query_pairs(1e-12)):
        if j >= keep_first:
            drop.add(j)
    mask = np.array([i not in drop for i in range(len(pts))])
    return pts[mask]


def _require_polygon_edges(facets, tags, n_poly):
    hole_edges = {tuple(sorted(f)) for f, t in zip(facets, tags) if t == "hole"}
    expected = {tuple(sorted((i, (i + 1) % n_poly))) for i in range(n_poly)}
    if hole_edges != expected:
        raise MeshError("hole boundary polygon was not recovered by the triangulation")


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------

def write_mesh(mesh: Mesh, path):
    with open(path, "w") as fh:
        fh.write(f"N {mesh.dim} {mesh.n_nodes} {mesh.n_elements} {len(mesh.bfacets)}\n")
        for x in mesh.nodes:
            fh.write("v " + " ".join(f"{c:.17g}" for c in x) + "\n")
        for el in mesh.elements:
            fh.write("e " + " ".join(str(i) for i in el) + "\n")
        for f, tag in zip(mesh.bfacets, mesh.btags):
            fh.write("b " + " ".join(str(i) for i in f) + f" {tag}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != "N":
        raise MeshError("mesh file must start with an N header line")
    dim, nn, ne, nb = map(int, lines[0][1:5])
    body = lines[1:]
    nodes = [list(map(float, ln[1:])) for ln in body if ln[0] == "v"]
    elems = [list(map(int, ln[1:])) for ln in body if ln[0] == "e"]
    bnd = [ln[1:] for ln in body if ln[0] == "b"]
    if (len(nodes), len(elems), len(bnd)) != (nn, ne, nb):
        raise MeshError("mesh file counts disagree with its header")
    facets = [list(map(int, b[:-1])) for b in bnd]
    tags = [b[-1] for b in bnd]
    nodes = np.array(nodes, dtype=float).reshape(nn, dim)
    elems = np.array(elems, dtype=np.int64).reshape(ne, dim + 1)
    return Mesh(nodes, elems, facets, tags, _mesh_size(nodes, elems))
