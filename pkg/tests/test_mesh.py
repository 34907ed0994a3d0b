import numpy as np
import pytest

from glfem.errors import CapacityError, InputError
from glfem.mesh import (
    MAX_LEVEL, build_uniform, dump_mesh, element_map, is_refinement_of, load_mesh, patch,
    patch_sizes, refine,
)


@pytest.mark.parametrize("level", range(0, 6))
def test_counts_and_area(level):
    m = build_uniform(level)
    assert m.num_elements == 2 * 4**level
    assert m.num_vertices == (2**level + 1) ** 2
    assert m.cell_size == 2.0**-level
    assert np.all(m.areas() > 0)
    assert abs(m.areas().sum() - 1.0) < 1e-14


def test_small_meshes():
    m = build_uniform(0)
    assert (m.num_elements, m.num_vertices, m.cell_size) == (2, 4, 1.0)
    m3 = build_uniform(3)
    assert (m3.num_elements, m3.num_vertices) == (128, 81)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        build_uniform(MAX_LEVEL + 1)
    with pytest.raises(InputError):
        build_uniform(-1)


@pytest.mark.parametrize("level", [1, 3, 4])
def test_edge_manifold(level):
    m = build_uniform(level)
    edges, counts = m.edges()
    p = m.vertices[edges]
    on_boundary = np.all(
        (np.abs(p[:, :, 0]) < 1e-14) | (np.abs(p[:, :, 0] - 1) < 1e-14), axis=1
    ) & (np.abs(p[:, 0, 0] - p[:, 1, 0]) < 1e-14)
    on_boundary |= np.all(
        (np.abs(p[:, :, 1]) < 1e-14) | (np.abs(p[:, :, 1] - 1) < 1e-14), axis=1
    ) & (np.abs(p[:, 0, 1] - p[:, 1, 1]) < 1e-14)
    assert np.all(counts[on_boundary] == 1)
    assert np.all(counts[~on_boundary] == 2)
    # Euler characteristic of a disc: V - E + F = 1
    assert m.num_vertices - len(edges) + m.num_elements == 1


def test_matching_intersections():
    # two distinct elements share 0, 1 or 2 vertices, never an edge interior
    m = build_uniform(2)
    sets = [set(e) for e in m.elements]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            assert len(sets[i] & sets[j]) in (0, 1, 2)
    # a shared pair of vertices is a full edge of both elements, by construction
    # of vertex triples; no vertex lies strictly inside another element's edge
    v = m.vertices
    for e in m.elements:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            mid = 0.5 * (v[e[a]] + v[e[b]])
            assert not np.any(np.all(np.abs(v - mid) < 1e-14, axis=1))


def test_refine_nested():
    m0 = build_uniform(0)
    m1 = refine(m0)
    assert m1.num_elements == 8 and m1.parent is m0
    for x in m0.vertices:
        assert np.any(np.all(m1.vertices == x, axis=1))
    m3 = refine(refine(build_uniform(1)))
    assert (m3.num_elements, m3.num_vertices) == (128, 81)
    assert is_refinement_of(m3, m0)
    assert not is_refinement_of(m0, m3)


def test_element_map_reference_vertices():
    m = build_uniform(0)
    F = element_map(m, 0)
    # lower triangle (0,0),(1,0),(1,1): columns p1-p0, p2-p0
    assert np.allclose(F.B, [[1, 1], [0, 1]])
    assert F.det == pytest.approx(1.0)
    ref = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    assert np.allclose(F(ref), m.vertices[m.elements[0]])


@pytest.mark.parametrize("k", [0, 17, 63])
def test_element_map_round_trip(k, rng):
    m = build_uniform(3)
    F = element_map(m, k)
    assert F.det == pytest.approx(2 * m.areas()[k], rel=1e-14)
    xh = rng.random((20, 2)) * 0.5
    assert np.max(np.abs(F.inverse(F(xh)) - xh)) < 1e-14
    assert np.allclose(F((0.0, 0.0)), m.vertices[m.elements[k, 0]])


def test_element_map_index_error():
    with pytest.raises(IndexError):
        element_map(build_uniform(1), 8)


def _patch_bruteforce(m, k):
    vk = set(m.elements[k])
    return {j for j, e in enumerate(m.elements) if vk & set(e)}


def test_patch_matches_bruteforce_and_is_symmetric():
    m = build_uniform(3)
    for k in range(m.num_elements):
        assert patch(m, k) == _patch_bruteforce(m, k)
    for k in (5, 40, 77):
        for j in patch(m, k):
            assert k in patch(m, j)


def test_patch_size_bounded():
    sizes = [patch_sizes(build_uniform(level)).max() for level in range(1, 7)]
    assert max(sizes) <= 13
    assert sizes[-1] == sizes[-2]
    m = build_uniform(1)
    assert 0 in patch(m, 0)


def test_locate(rng):
    m = build_uniform(3)
    pts = rng.random((200, 2))
    elem = m.locate(pts)
    v = m.vertices[m.elements[elem]]
    # barycentric coordinates must be nonnegative
    B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
    lam = np.linalg.solve(B, (pts - v[:, 0])[..., None])[..., 0]
    assert np.all(lam > -1e-12) and np.all(lam.sum(axis=1) < 1 + 1e-12)


def test_dump_round_trip(tmp_path):
    m = build_uniform(2)
    path = tmp_path / "mesh.txt"
    dump_mesh(m, path)
    text = path.read_text().splitlines()
    assert text[0] == "vertices 25"
    m2 = load_mesh(path)
    assert np.array_equal(m2.vertices, m.vertices)
    assert np.array_equal(m2.elements, m.elements)
    assert m2.level == 2
