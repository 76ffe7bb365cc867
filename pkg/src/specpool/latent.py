"""Latent-space arithmetic and PCA embeddings of latent codes."""
import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import CclbMismatch, DimensionMismatch, EmptyTerms, TooFewCodes


def _check_compatible(codes):
    first = codes[0]
    for c in codes[1:]:
        if c.cclb_id != first.cclb_id:
            raise CclbMismatch(f"codes from latent bases {first.cclb_id!r} and {c.cclb_id!r}")
        if c.z.shape != first.z.shape:
            raise DimensionMismatch(f"code shapes {first.z.shape} and {c.z.shape} differ")


def interpolate(z_a, z_b, t):
    _check_compatible([z_a, z_b])
    return z_a.replace((1.0 - t) * z_a.z + t * z_b.z, shape_id=f"{z_a.shape_id}~{z_b.shape_id}@{t:g}")


def latent_algebra(terms):
    """Linear combination ``sum c_i z_i`` of ``(coefficient, code)`` pairs."""
    terms = list(terms)
    if not terms:
        raise EmptyTerms("latent_algebra needs at least one term")
    _check_compatible([c for _, c in terms])
    z = sum(float(w) * c.z for w, c in terms)
    label = " ".join(f"{w:+g}*{c.shape_id}" for w, c in terms)
    return terms[0][1].replace(z, shape_id=label)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    shape_ids: list
    tags: list
    coords: np.ndarray              # (n, dim)
    explained_variance: np.ndarray  # (dim,) fractions of total variance

    @property
    def dim(self):
        return self.coords.shape[1]


def flatten_codes(codes):
    # row-major: all F features of latent function 0, then function 1, ...
    return np.stack([np.asarray(c.z, dtype=np.float64).ravel(order="C") for c in codes])


def pca_embed(codes, dim=2, tags=None):
    """Project flattened codes onto their top ``dim`` principal axes.

    Each axis is oriented so its largest-magnitude loading is positive.
    """
    codes = list(codes)
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if len(codes) < dim + 1:
        raise TooFewCodes(f"PCA to {dim}D needs at least {dim + 1} codes, got {len(codes)}")
    _check_compatible(codes)
    X = flatten_codes(codes)
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    axes = vt[:dim].T
    if axes.shape[1] < dim:
        axes = np.hstack([axes, np.zeros((X.shape[1], dim - axes.shape[1]))])
    big = np.argmax(np.abs(axes), axis=0)
    signs = np.sign(axes[big, np.arange(dim)])
    signs[signs == 0] = 1.0
    axes = axes * signs
    coords = Xc @ axes
    coords = coords - coords.mean(axis=0)
    var = s ** 2
    total = var.sum()
    frac = np.zeros(dim)
    if total > 0:
        m = min(dim, len(var))
        frac[:m] = var[:m] / total
    tags = list(tags) if tags is not None else [""] * len(codes)
    return EmbeddingTable([c.shape_id for c in codes], tags, coords, frac)


def write_embedding_csv(table, path):
    """CSV with a leading ``# {json}`` line holding explained variance."""
    cols = ["x", "y", "z"][: table.dim]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        header = {"explained_variance": [float(v) for v in table.explained_variance],
                  "flatten_order": "k2-major"}
        fh.write("# " + json.dumps(header) + "\n")
        w = csv.writer(fh)
        w.writerow(["shape_id", "tag", *cols])
        for sid, tag, row in zip(table.shape_ids, table.tags, table.coords):
            w.writerow([sid, tag, *(repr(float(v)) for v in row)])
    os.replace(tmp, path)


def read_embedding_csv(path):
    with open(path, newline="") as fh:
        header = json.loads(fh.readline()[1:].strip())
        rows = list(csv.reader(fh))
    body = rows[1:]
    coords = np.array([[float(v) for v in r[2:]] for r in body])
    return EmbeddingTable([r[0] for r in body], [r[1] for r in body], coords,
                          np.array(header["explained_variance"]))
