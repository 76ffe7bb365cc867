"""Synthetic shape collections with known ground-truth correspondences."""
import numpy as np

from .mesh import Mesh


def icosphere(subdivisions=3, radius=1.0, name="icosphere"):
    """Loop-subdivided icosahedron projected to a sphere (642 vertices at 3)."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(radius * np.array(verts), np.array(faces), name)


def radial_deform(mesh, amplitudes, name=None):
    """Scale each vertex radially by ``1 + sum_i a_i f_i(x)`` with fixed smooth bumps.

    The bump functions are low-order polynomials of the unit direction, chosen
    without any rotational symmetry so deformed spheres have simple spectra.
    """
    v = mesh.vertices
    u = v / np.linalg.norm(v, axis=1, keepdims=True)
    x, y, z = u.T
    bumps = [
        x * y + 0.3 * z,
        z * z - 0.5 * x + 0.2 * y,
        x * z * y + 0.4 * x * x - 0.25 * y,
        np.sin(2.0 * x + 1.0) * np.cos(y - 0.5 * z),
    ]
    r = np.ones(len(v))
    for a, f in zip(amplitudes, bumps):
        r = r + a * f
    return mesh.with_vertices(v * r[:, None], name=name)


def deformed_sphere_collection(subdivisions=3):
    """Icosphere plus three smooth radial deformations, identical connectivity."""
    base = icosphere(subdivisions, name="sphere")
    amps = [
        (0.15, 0.10, 0.0, 0.05),
        (-0.10, 0.20, 0.15, 0.0),
        (0.05, -0.15, 0.10, 0.12),
    ]
    shapes = [base]
    for i, a in enumerate(amps, start=1):
        shapes.append(radial_deform(base, a, name=f"deform{i}"))
    return shapes


def asymmetric_blob(subdivisions=3, name="blob"):
    """A deformed sphere whose Laplacian spectrum has no repeated eigenvalues."""
    base = icosphere(subdivisions, name=name)
    m = radial_deform(base, (0.2, 0.12, 0.1, 0.08), name=name)
    return m.with_vertices(m.vertices * np.array([1.0, 0.8, 0.65]))


def blob_collection(subdivisions=3):
    """Anisotropic blob plus three mild bump deformations, identical connectivity.

    Mild enough that descriptor-based maps followed by ZoomOut recover most of
    the ground truth, which near-round spheres do not allow.
    """
    base = asymmetric_blob(subdivisions, name="blob0")
    amps = [
        (0.03, -0.03, 0.03, 0.03),
        (-0.03, 0.02, 0.04, 0.0),
        (0.02, 0.02, -0.02, 0.02),
    ]
    shapes = [base]
    for i, a in enumerate(amps, start=1):
        shapes.append(radial_deform(base, a, name=f"blob{i}"))
    return shapes


def random_permutation(n, seed=0):
    return np.random.default_rng(seed).permutation(n)


def body_pose(mesh, body, pose, name=None):
    """Two-factor deformation: anisotropic ``body`` scaling then a ``pose`` bend.

    ``body`` is a length-3 axis scaling; ``pose`` is a bend amplitude that
    lifts vertices along z in proportion to x**2.
    """
    v = mesh.vertices * np.asarray(body, dtype=np.float64)
    v = v.copy()
    v[:, 2] += pose * v[:, 0] ** 2
    v[:, 1] += 0.5 * pose * v[:, 0]
    return mesh.with_vertices(v, name=name)
