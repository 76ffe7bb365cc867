import numpy as np
import pytest

from specpool.mesh import Mesh
from specpool.spectral import eigenbasis
from specpool.synthetic import (
    asymmetric_blob,
    deformed_sphere_collection,
    icosphere,
    random_permutation,
)


def tetrahedron(edge=1.0):
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / np.linalg.norm(v[0] - v[1])
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return Mesh(v, f, "tetra")


@pytest.fixture
def tetra():
    return tetrahedron()


@pytest.fixture(scope="session")
def sphere1():
    return icosphere(1)


@pytest.fixture(scope="session")
def blob2():
    """162-vertex asymmetric blob (dense eigensolver range)."""
    return asymmetric_blob(2)


@pytest.fixture(scope="session")
def blob3():
    return asymmetric_blob(3)


@pytest.fixture(scope="session")
def blob3_pair(blob3):
    """(mesh, permuted copy, perm, inv) with copy vertex i = original vertex perm[i]."""
    n = blob3.n_vertices
    perm = random_permutation(n, 7)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    return blob3, blob3.permuted(perm, name="blob_perm"), perm, inv


@pytest.fixture(scope="session")
def blob3_pair_bases(blob3_pair):
    m, m2, _, _ = blob3_pair
    return eigenbasis(m, 120), eigenbasis(m2, 120)


@pytest.fixture(scope="session")
def sphere_collection():
    return deformed_sphere_collection(3)


@pytest.fixture(scope="session")
def sphere_collection_bases(sphere_collection):
    return [eigenbasis(s, 120) for s in sphere_collection]


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one summary line per acceptance criterion."""
    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
