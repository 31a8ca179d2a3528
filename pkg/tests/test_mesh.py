import math

import numpy as np
import pytest

from helmsense.errors import HoleTooCloseError, MeshError
from helmsense.geometry import Domain, RectifiableSet
from helmsense.mesh import Mesh, generate_mesh, hole_meshes, read_mesh, write_mesh

UNIT = Domain.rectangle((0, 0), (1, 1))


def test_interval_mesh_counts():
    m = generate_mesh(Domain.interval(-1, 1), 0.5)
    assert m.n_nodes == 5 and m.n_elements == 4
    assert sorted(m.nodes_with_tag("outer")) == [0, 4]
    assert m.volumes.sum() == pytest.approx(2.0)


def test_square_mesh_counts_and_area():
    m = generate_mesh(UNIT, 0.25)
    assert m.n_elements == 32
    assert m.volumes.sum() == pytest.approx(1.0)
    assert np.all(m.signed_volumes > 0)
    assert m.h == pytest.approx(math.sqrt(2) * 0.25)
    assert len(m.nodes_with_tag("outer")) == 16


def test_disk_mesh_area_converges():
    d = Domain.disk((0, 0), 1.0)
    errs = [abs(generate_mesh(d, h).volumes.sum() - math.pi) for h in (0.2, 0.1)]
    assert errs[1] < errs[0] < 0.1


def test_mesh_is_read_only():
    m = generate_mesh(UNIT, 0.5)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 3.0


def test_invalid_meshes_rejected():
    nodes = [[0, 0], [1, 0], [0, 1]]
    with pytest.raises(MeshError):
        Mesh(nodes, [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], ["outer"] * 3, 1.0)  # clockwise
    with pytest.raises(MeshError):
        Mesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ["outer", "outer", "side"], 1.0)
    with pytest.raises(MeshError):
        Mesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2]], ["outer", "outer"], 1.0)
    with pytest.raises(MeshError):
        generate_mesh(UNIT, 0.0)


def test_unknown_tag_lookup():
    with pytest.raises(MeshError):
        generate_mesh(UNIT, 0.5).nodes_with_tag("inlet")


def test_1d_hole_meshes_share_the_hole_boundary():
    outer, inner, full = hole_meshes(Domain.interval(-1, 1), 2.0 ** -4, RectifiableSet.point([0.0]), 0.25)
    hole = outer.nodes[outer.nodes_with_tag("hole"), 0]
    assert sorted(hole) == [-0.25, 0.25]
    assert outer.volumes.sum() == pytest.approx(1.5)
    assert inner.volumes.sum() == pytest.approx(0.5)
    assert full.volumes.sum() == pytest.approx(2.0)
    assert full.volumes[full.element_mask("hole")].sum() == pytest.approx(0.5)
    assert 0.0 in inner.nodes[:, 0]


def test_2d_hole_meshes():
    E = RectifiableSet.point([0.5, 0.5])
    outer, inner, full = hole_meshes(UNIT, 0.05, E, 0.2)
    assert outer.has_tag("hole") and not full.has_tag("hole")
    d, _ = E.distance(outer.nodes[outer.nodes_with_tag("hole")])
    assert np.allclose(d, 0.2)
    assert outer.volumes.sum() + inner.volumes.sum() == pytest.approx(full.volumes.sum())
    assert full.volumes.sum() == pytest.approx(1.0)
    outer.check_components()


def test_hole_too_close_to_boundary():
    with pytest.raises(HoleTooCloseError):
        hole_meshes(UNIT, 0.1, RectifiableSet.point([0.1, 0.5]), 0.08)
    with pytest.raises(MeshError):
        hole_meshes(UNIT, 0.1, RectifiableSet.point([0.5, 0.5]), 0.0)


def test_mesh_file_round_trip(tmp_path):
    m = hole_meshes(UNIT, 0.1, RectifiableSet.point([0.5, 0.5]), 0.2)[0]
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.elements, m2.elements)
    assert list(m.btags) == list(m2.btags)
