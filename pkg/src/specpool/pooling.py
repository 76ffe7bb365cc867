"""Spectral pooling through the canonical latent basis, linear encode/decode and losses."""
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .descriptors import XYZ, xyz_features
from .errors import (
    CclbMismatch,
    DimensionMismatch,
    RankDeficientBasisWarning,
    WrongFeatureKind,
)
from .mesh import Mesh
from .spectral import project

PINV_RCOND = 1e-10
LOSS_LAMBDA = 10.0
MAX_LOSS_POINTS = 20000
MSE_SCALE = 1e4


@dataclass(frozen=True, eq=False)
class LatentCode:
    z: np.ndarray           # (k2, F)
    shape_id: str = ""
    cclb_id: str = ""
    kind: str = XYZ

    @property
    def k2(self):
        return self.z.shape[0]

    @property
    def feature_dim(self):
        return self.z.shape[1]

    def replace(self, z, shape_id=None):
        return LatentCode(np.asarray(z, dtype=np.float64),
                          self.shape_id if shape_id is None else shape_id,
                          self.cclb_id, self.kind)


@dataclass(frozen=True, eq=False)
class TemplateRef:
    mesh: Mesh
    basis: object           # SpectralBasis
    y_tilde: np.ndarray     # (k1, k2)
    cclb_id: str = ""

    @property
    def shape_id(self):
        return self.mesh.name


def latent_pinv(y_tilde):
    """Moore-Penrose pseudo-inverse with singular values below 1e-10 * max dropped.

    Returns ``(pinv, rank)``.
    """
    u, s, vt = np.linalg.svd(y_tilde, full_matrices=False)
    keep = s > PINV_RCOND * s[0] if s.size else s.astype(bool)
    inv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return inv, int(keep.sum())


def spectral_pool(basis, y_tilde, features, shape_id="", cclb_id="", kind=XYZ):
    """Project vertex features to the latent basis: ``z = pinv(Y~) phi^T M F``."""
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    F = np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    k1, k2 = y_tilde.shape
    if k1 > basis.k:
        raise DimensionMismatch(f"latent basis needs k1={k1}, spectral basis has k={basis.k}")
    if F.shape[0] != basis.n:
        raise DimensionMismatch(f"features have {F.shape[0]} rows, shape has {basis.n} vertices")
    inv, rank = latent_pinv(y_tilde)
    if rank < k2:
        warnings.warn(f"latent basis of {shape_id!r} has rank {rank} < k2={k2}",
                      RankDeficientBasisWarning, stacklevel=2)
    coeffs = project(basis.truncate(k1), F)
    return LatentCode(inv @ coeffs, shape_id, cclb_id, kind)


def spectral_unpool(template, code):
    """Synthesize a latent code on the template: ``phi_t Y~_t z``."""
    if code.cclb_id != template.cclb_id:
        raise CclbMismatch(f"code from latent basis {code.cclb_id!r}, template uses {template.cclb_id!r}")
    k1 = template.y_tilde.shape[0]
    if code.k2 != template.y_tilde.shape[1]:
        raise DimensionMismatch(f"code has k2={code.k2}, template has {template.y_tilde.shape[1]}")
    return template.basis.phi[:, :k1] @ (template.y_tilde @ code.z)


def decode_to_template(code, template):
    """Linear decoder: unpooled XYZ features become the template's vertex positions."""
    if code.feature_dim != 3 or code.kind != XYZ:
        raise WrongFeatureKind(f"decoding needs 3 XYZ features, got {code.feature_dim} {code.kind}")
    verts = spectral_unpool(template, code)
    return Mesh(verts, template.mesh.faces, f"{code.shape_id}@{template.shape_id}")


class LinearAutoencoder:
    """Encode collection shapes into a canonical latent basis and decode onto templates.

    Parameters
    ----------
    meshes : dict of shape_id -> Mesh
    bases : dict of shape_id -> SpectralBasis
    cclb : CanonicalBasis whose ``shape_ids`` cover ``meshes``
    """

    def __init__(self, meshes, bases, cclb):
        self.meshes = dict(meshes)
        self.bases = dict(bases)
        self.cclb = cclb

    def features(self, shape_id, kind=XYZ):
        if kind == XYZ:
            return xyz_features(self.meshes[shape_id]).values
        raise WrongFeatureKind(f"no feature extractor for {kind!r}")

    def encode(self, shape_id, kind=XYZ, features=None):
        if features is None:
            features = self.features(shape_id, kind)
        return spectral_pool(self.bases[shape_id], self.cclb.for_shape(shape_id), features,
                             shape_id, self.cclb.cclb_id, kind)

    def template(self, shape_id):
        return TemplateRef(self.meshes[shape_id], self.bases[shape_id],
                           self.cclb.for_shape(shape_id), self.cclb.cclb_id)

    def decode(self, code, template_id):
        return decode_to_template(code, self.template(template_id))


# --------------------------------------------------------------------------
# losses and metrics


def _coords(x):
    return np.asarray(x.vertices if isinstance(x, Mesh) else x, dtype=np.float64)


def p2p_loss(p2p, source, reconstruction):
    """``||Pi S - X||_F^2`` where ``p2p`` maps template (reconstruction) vertices to the source."""
    S, X = _coords(source), _coords(reconstruction)
    a = p2p.assignment if hasattr(p2p, "assignment") else np.asarray(p2p)
    if len(a) != len(X):
        raise DimensionMismatch(f"p2p has {len(a)} entries, reconstruction has {len(X)} vertices")
    if a.min() < 0 or a.max() >= len(S):
        raise DimensionMismatch("p2p entries out of range for the source")
    return float(np.sum((S[a] - X) ** 2))


def subsample_indices(n, max_points=MAX_LOSS_POINTS, seed=0):
    if n <= max_points:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, max_points, replace=False))


def pairwise_distance_loss(pulled_source, reconstruction, max_points=MAX_LOSS_POINTS, seed=0):
    """``||D^S - D^X||_F^2`` over squared pairwise distances, subsampled above ``max_points``."""
    A, B = _coords(pulled_source), _coords(reconstruction)
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} differ")
    idx = subsample_indices(len(A), max_points, seed)
    return _kernels.distance_discrepancy(A[idx], B[idx])


def combined_loss(l1, l2, lam=LOSS_LAMBDA):
    return l1 + lam * l2


def mse_eval(reconstruction, ground_truth, p2p=None):
    """Mean squared vertex error (x 1e4); ``p2p`` maps reconstruction vertices to ground truth."""
    X, G = _coords(reconstruction), _coords(ground_truth)
    if p2p is not None:
        a = p2p.assignment if hasattr(p2p, "assignment") else np.asarray(p2p)
        if len(a) != len(X):
            raise DimensionMismatch(f"p2p has {len(a)} entries, reconstruction has {len(X)} vertices")
        G = G[a]
    elif len(X) != len(G):
        raise DimensionMismatch("vertex counts differ and no correspondence given")
    return float(np.mean(np.sum((X - G) ** 2, axis=1)) * MSE_SCALE)
