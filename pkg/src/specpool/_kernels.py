"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``SPECPOOL_NUMBA`` is not set
to ``0``. Both paths are always importable as ``*_numba`` / ``*_numpy`` so
tests and the benchmark can compare them directly.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SPECPOOL_NUMBA", "1") != "0"

# rows of the query block processed at once by the numpy paths
_CHUNK = 256


# --------------------------------------------------------------------------
# per-face cotangents


def face_cotangents_numpy(vertices, faces):
    """Cotangent of the interior angle at each corner of each face.

    Column ``c`` holds the angle at ``faces[:, c]``, i.e. the angle opposite
    the edge ``(faces[:, c+1], faces[:, c+2])``.
    """
    v = vertices[faces]  # (m, 3, 3)
    out = np.empty(faces.shape, dtype=np.float64)
    for c in range(3):
        e1 = v[:, (c + 1) % 3] - v[:, c]
        e2 = v[:, (c + 2) % 3] - v[:, c]
        dot = np.einsum("ij,ij->i", e1, e2)
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, c] = dot / cross
    return out


def _face_cotangents_loop(vertices, faces):
    m = faces.shape[0]
    out = np.empty((m, 3), dtype=np.float64)
    for f in range(m):
        for c in range(3):
            a = faces[f, c]
            b = faces[f, (c + 1) % 3]
            d = faces[f, (c + 2) % 3]
            e1x = vertices[b, 0] - vertices[a, 0]
            e1y = vertices[b, 1] - vertices[a, 1]
            e1z = vertices[b, 2] - vertices[a, 2]
            e2x = vertices[d, 0] - vertices[a, 0]
            e2y = vertices[d, 1] - vertices[a, 1]
            e2z = vertices[d, 2] - vertices[a, 2]
            dot = e1x * e2x + e1y * e2y + e1z * e2z
            cx = e1y * e2z - e1z * e2y
            cy = e1z * e2x - e1x * e2z
            cz = e1x * e2y - e1y * e2x
            cross = np.sqrt(cx * cx + cy * cy + cz * cz)
            if cross == 0.0:
                if dot > 0.0:
                    out[f, c] = np.inf
                elif dot < 0.0:
                    out[f, c] = -np.inf
                else:
                    out[f, c] = np.nan
            else:
                out[f, c] = dot / cross
    return out


# --------------------------------------------------------------------------
# exact nearest neighbour (brute force), ties to the smallest index


def nearest_neighbors_numpy(query, data):
    n_q = query.shape[0]
    out = np.empty(n_q, dtype=np.int64)
    for start in range(0, n_q, _CHUNK):
        q = query[start:start + _CHUNK]
        d2 = ((q[:, None, :] - data[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first occurrence of the minimum
        out[start:start + _CHUNK] = np.argmin(d2, axis=1)
    return out


def _nearest_neighbors_loop(query, data):
    n_q, dim = query.shape
    n_d = data.shape[0]
    out = np.empty(n_q, dtype=np.int64)
    for i in range(n_q):
        best = np.inf
        best_j = 0
        for j in range(n_d):
            s = 0.0
            for c in range(dim):
                t = query[i, c] - data[j, c]
                s += t * t
            if s < best:
                best = s
                best_j = j
        out[i] = best_j
    return out


# --------------------------------------------------------------------------
# sum_ij (|a_i - a_j|^2 - |b_i - b_j|^2)^2 without materializing n x n


def distance_discrepancy_numpy(a, b):
    n = a.shape[0]
    total = 0.0
    for start in range(0, n, _CHUNK):
        da = ((a[start:start + _CHUNK, None, :] - a[None, :, :]) ** 2).sum(axis=2)
        db = ((b[start:start + _CHUNK, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        total += float(((da - db) ** 2).sum())
    return total


def _distance_discrepancy_loop(a, b):
    n, dim = a.shape
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(i + 1, n):
            sa = 0.0
            sb = 0.0
            for c in range(dim):
                ta = a[i, c] - a[j, c]
                tb = b[i, c] - b[j, c]
                sa += ta * ta
                sb += tb * tb
            t = sa - sb
            row += t * t
        total += row
    return 2.0 * total


if HAVE_NUMBA:
    face_cotangents_numba = njit(cache=True)(_face_cotangents_loop)
    nearest_neighbors_numba = njit(cache=True)(_nearest_neighbors_loop)
    distance_discrepancy_numba = njit(cache=True)(_distance_discrepancy_loop)
else:  # pragma: no cover
    face_cotangents_numba = _face_cotangents_loop
    nearest_neighbors_numba = _nearest_neighbors_loop
    distance_discrepancy_numba = _distance_discrepancy_loop


def _contig(x, dtype=np.float64):
    return np.ascontiguousarray(x, dtype=dtype)


def face_cotangents(vertices, faces):
    vertices, faces = _contig(vertices), _contig(faces, np.int64)
    if USE_NUMBA:
        return face_cotangents_numba(vertices, faces)
    return face_cotangents_numpy(vertices, faces)


def nearest_neighbors(query, data):
    query, data = _contig(query), _contig(data)
    if query.shape[1] != data.shape[1]:
        raise ValueError("query and data dimensions differ")
    if USE_NUMBA:
        return nearest_neighbors_numba(query, data)
    return nearest_neighbors_numpy(query, data)


def distance_discrepancy(a, b):
    a, b = _contig(a), _contig(b)
    if USE_NUMBA:
        return float(distance_discrepancy_numba(a, b))
    return distance_discrepancy_numpy(a, b)
