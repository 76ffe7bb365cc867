"""Triangle meshes: data model, ASCII file I/O and discrete operators."""
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import (
    DegenerateExtent,
    DegenerateFace,
    EmptyMesh,
    IsolatedVertex,
    MeshIndexError,
    ParseError,
    ZeroAreaFace,
)

log = logging.getLogger(__name__)

COT_CLAMP = 1e4


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
    faces : (m, 3) array_like of int
        Zero-based vertex indices.
    name : str
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        if v.size == 0 or f.size == 0:
            raise EmptyMesh(f"mesh {self.name!r} has no vertices or no faces")
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (m, 3), got {f.shape}")
        if f.min() < 0 or f.max() >= len(v):
            bad = int(np.argmax((f < 0).any(axis=1) | (f >= len(v)).any(axis=1)))
            raise MeshIndexError(
                f"face {bad} {f[bad].tolist()} references a vertex outside [0, {len(v)})"
            )
        if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
            raise DegenerateFace("face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices, name=None):
        return Mesh(vertices, self.faces, self.name if name is None else name)

    def permuted(self, perm, name=None):
        """Relabel vertices: new vertex ``i`` is old vertex ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Mesh(self.vertices[perm], inv[self.faces], self.name if name is None else name)


# --------------------------------------------------------------------------
# file I/O

_FORMATS = {".off": "OFF", ".obj": "OBJ", ".ply": "PLY"}


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _data_lines(text):
    """Yield (line_number, tokens) skipping blanks and comments."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _read_off(text, path):
    lines = _data_lines(text)
    try:
        no, tok = next(lines)
    except StopIteration:
        raise EmptyMesh(f"{path}: empty file")
    if not tok[0].endswith("OFF"):
        raise ParseError("missing OFF header", no, path)
    tok = tok[1:]
    if not tok:
        try:
            no, tok = next(lines)
        except StopIteration:
            raise ParseError("missing element counts", no, path)
    try:
        nv, nf = int(tok[0]), int(tok[1])
    except (ValueError, IndexError):
        raise ParseError("bad element counts", no, path)
    verts, faces = [], []
    for _ in range(nv):
        try:
            no, tok = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nv} vertices, file ended", no, path)
        try:
            verts.append([float(t) for t in tok[:3]])
        except ValueError:
            raise ParseError("bad vertex coordinate", no, path)
        if len(tok) < 3:
            raise ParseError("vertex needs 3 coordinates", no, path)
    for _ in range(nf):
        try:
            no, tok = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nf} faces, file ended", no, path)
        try:
            cnt = int(tok[0])
            poly = [int(t) for t in tok[1:1 + cnt]]
        except ValueError:
            raise ParseError("bad face record", no, path)
        if cnt < 3 or len(poly) != cnt:
            raise ParseError("face needs at least 3 indices", no, path)
        _check_indices(poly, nv, no, path)
        faces.extend(_fan(poly))
    return verts, faces


def _check_indices(poly, nv, no, path):
    for i in poly:
        if i < 0 or i >= nv:
            raise MeshIndexError(f"{path}:{no}: face references vertex {i}, mesh has {nv}")


def _read_obj(text, path):
    verts, polys = [], []
    for no, tok in _data_lines(text):
        if tok[0] == "v":
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError:
                raise ParseError("bad vertex coordinate", no, path)
            if len(tok) < 4:
                raise ParseError("vertex needs 3 coordinates", no, path)
        elif tok[0] == "f":
            try:
                idx = [int(t.split("/")[0]) for t in tok[1:]]
            except ValueError:
                raise ParseError("bad face record", no, path)
            if len(idx) < 3:
                raise ParseError("face needs at least 3 indices", no, path)
            polys.append((no, idx))
    nv = len(verts)
    faces = []
    for no, idx in polys:
        # OBJ is 1-based; negative indices count back from the current end
        poly = [i - 1 if i > 0 else nv + i for i in idx]
        if 0 in idx:
            raise MeshIndexError(f"{path}:{no}: OBJ index 0 is invalid")
        _check_indices(poly, nv, no, path)
        faces.extend(_fan(poly))
    return verts, faces


def _read_ply(raw, path):
    head_end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or head_end < 0:
        raise ParseError("not a PLY file", 1, path)
    header = raw[:head_end].decode("ascii", errors="replace").splitlines()
    elements = []  # (name, count, [property names], list_property?)
    fmt = None
    for no, line in enumerate(header, start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
            if fmt != "ascii":
                raise ParseError(f"binary PLY ({fmt}) is not supported; convert to ASCII", no, path)
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), [], False])
        elif tok[0] == "property" and elements:
            if tok[1] == "list":
                elements[-1][3] = True
                elements[-1][2].append(tok[-1])
            else:
                elements[-1][2].append(tok[-1])
    if fmt is None:
        raise ParseError("PLY header lacks a format line", 1, path)
    body_start = len(header) + 2  # header lines + end_header line
    body = raw[head_end:].decode("ascii", errors="replace").splitlines()[1:]
    it = iter(enumerate(body, start=body_start))
    verts, faces = [], []
    for name, count, props, is_list in elements:
        for _ in range(count):
            no, line = next(it, (None, None))
            while line is not None and not line.strip():
                no, line = next(it, (None, None))
            if line is None:
                raise ParseError(f"element {name} truncated", no, path)
            tok = line.split()
            if name == "vertex":
                try:
                    vals = dict(zip(props, (float(t) for t in tok)))
                    verts.append([vals["x"], vals["y"], vals["z"]])
                except (KeyError, ValueError):
                    raise ParseError("bad vertex record", no, path)
            elif name == "face" and is_list:
                try:
                    cnt = int(tok[0])
                    poly = [int(t) for t in tok[1:1 + cnt]]
                except (ValueError, IndexError):
                    raise ParseError("bad face record", no, path)
                if cnt < 3 or len(poly) != cnt:
                    raise ParseError("face needs at least 3 indices", no, path)
                _check_indices(poly, len(verts), no, path)
                faces.extend(_fan(poly))
    return verts, faces


def load_mesh(path, format=None):
    """Read an ASCII OFF, OBJ or PLY file. Polygons are fan-triangulated."""
    path = os.fspath(path)
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        if ext not in _FORMATS:
            raise ParseError(f"cannot infer mesh format from extension {ext!r}", path=path)
        format = _FORMATS[ext]
    format = format.upper().replace("-ASCII", "")
    with open(path, "rb") as fh:
        raw = fh.read()
    if format == "PLY":
        verts, faces = _read_ply(raw, path)
    else:
        text = raw.decode("utf-8", errors="replace")
        if format == "OFF":
            verts, faces = _read_off(text, path)
        elif format == "OBJ":
            verts, faces = _read_obj(text, path)
        else:
            raise ValueError(f"unknown mesh format {format!r}")
    if not verts or not faces:
        raise EmptyMesh(f"{path}: no vertices or no faces")
    name = os.path.splitext(os.path.basename(path))[0]
    return Mesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64), name)


def write_off(mesh, path):
    """Write ``mesh`` as OFF with round-trip exact float formatting."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# geometry


def normalize_unit_box(mesh):
    """Center the bounding box and scale uniformly so its longest side spans [-1, 1]."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    half = (hi - lo).max() / 2.0
    if not half > 0:
        raise DegenerateExtent(f"mesh {mesh.name!r}: all vertices coincide")
    center = (lo + hi) / 2.0
    return mesh.with_vertices((mesh.vertices - center) / half)


def face_areas(mesh):
    v = mesh.vertices[mesh.faces]
    return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def vertex_areas(mesh):
    """Barycentric lumped mass: each vertex gets a third of its incident face areas."""
    areas = face_areas(mesh)
    v = mesh.vertices[mesh.faces]
    longest = np.max(
        [((v[:, a] - v[:, b]) ** 2).sum(axis=1) for a, b in ((0, 1), (1, 2), (2, 0))], axis=0
    )
    bad = areas <= 1e-14 * longest
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ZeroAreaFace(f"mesh {mesh.name!r}: face {i} {mesh.faces[i].tolist()} has zero area")
    mass = np.bincount(mesh.faces.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=mesh.n_vertices)
    if (mass <= 0).any():
        i = int(np.flatnonzero(mass <= 0)[0])
        raise IsolatedVertex(f"mesh {mesh.name!r}: vertex {i} belongs to no face")
    return mass


def _clamped_cotangents(mesh):
    cot = _kernels.face_cotangents(mesh.vertices, mesh.faces)
    bad = ~(np.abs(cot) <= COT_CLAMP)  # also catches nan/inf
    n_bad = int(bad.sum())
    if n_bad:
        cot = np.where(np.isnan(cot), 0.0, cot)
        cot = np.clip(cot, -COT_CLAMP, COT_CLAMP)
    return cot, n_bad


def cotangent_stiffness(mesh):
    """Cotangent stiffness matrix W (positive semi-definite, rows sum to zero).

    ``W[i, j] = -(cot a_ij + cot b_ij) / 2`` for an edge with opposite angles
    a_ij, b_ij; boundary edges contribute one term, non-manifold edges all of
    theirs. Near-degenerate cotangents are clamped to +-1e4 with a warning.
    """
    cot, n_bad = _clamped_cotangents(mesh)
    if n_bad:
        log.warning("mesh %r: clamped %d near-degenerate cotangents", mesh.name, n_bad)
    f = mesh.faces
    # corner c is opposite edge (c+1, c+2)
    i = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    j = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    w = -0.5 * np.concatenate([cot[:, 0], cot[:, 1], cot[:, 2]])
    n = mesh.n_vertices
    off = sp.coo_matrix((w, (i, j)), shape=(n, n))
    off = (off + off.T).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    W = (off + sp.diags(diag)).tocsr()
    W.sum_duplicates()
    W.sort_indices()
    return W


def edge_face_counts(mesh):
    f = mesh.faces
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def quality_report(mesh):
    """Counts of clamped cotangents, boundary and non-manifold edges."""
    _, n_bad = _clamped_cotangents(mesh)
    counts = edge_face_counts(mesh)
    return {
        "name": mesh.name,
        "n_vertices": int(mesh.n_vertices),
        "n_faces": int(mesh.n_faces),
        "clamped_cotangents": n_bad,
        "boundary_edges": int((counts == 1).sum()),
        "non_manifold_edges": int((counts > 2).sum()),
    }


def quality_report_json(mesh):
    return json.dumps(quality_report(mesh), sort_keys=True)
