import numpy as np
import pytest

from rops3d.decimate import decimate
from rops3d.mesh import MeshError
from rops3d.shapes import planar_grid


class TestDecimate:
    @pytest.mark.parametrize("fraction", [0.5, 0.25, 0.125])
    def test_hits_vertex_target(self, medium_blob, fraction):
        out = decimate(medium_blob, fraction)
        target = round(fraction * medium_blob.n_vertices)
        assert abs(out.n_vertices - target) <= max(2, 0.01 * target)

    def test_closed_stays_closed_and_manifold(self, medium_blob):
        out = decimate(medium_blob, 0.5)
        assert len(out.boundary_edges) == 0
        # Euler characteristic of a sphere
        assert out.n_vertices - len(out.edges) + out.n_triangles == 2

    def test_resolution_grows_by_sqrt2(self, medium_blob):
        out = decimate(medium_blob, 0.5)
        assert out.resolution / medium_blob.resolution == pytest.approx(np.sqrt(2), rel=0.1)

    def test_surface_stays_close(self, medium_blob):
        out = decimate(medium_blob, 0.5)
        d, _ = medium_blob.kdtree.query(out.vertices)
        assert d.max() < 1.0 * medium_blob.resolution

    def test_plane_stays_planar(self):
        g = planar_grid(25, jitter=0.2, seed=1)
        out = decimate(g, 0.3)
        assert np.abs(out.vertices[:, 2]).max() < 1e-9
        assert out.area == pytest.approx(g.area, rel=1e-6)

    def test_no_flipped_normals(self, medium_blob):
        out = decimate(medium_blob, 0.25)
        p = out.vertices[out.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        # a star-shaped closed blob keeps outward-facing triangles
        assert (np.einsum("ij,ij->i", n, p.mean(axis=1)) > 0).mean() > 0.99

    def test_identity_and_errors(self, small_blob):
        assert decimate(small_blob, 1.0) is small_blob
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                decimate(small_blob, bad)
        with pytest.raises(MeshError):
            decimate(small_blob, 1e-4)

    def test_deterministic(self, small_blob):
        a, b = decimate(small_blob, 0.5), decimate(small_blob, 0.5)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)


def test_bundled_mesh_half(blob_a):
    out = decimate(blob_a, 0.5)
    assert abs(out.n_vertices - blob_a.n_vertices / 2) <= 0.02 * blob_a.n_vertices / 2
