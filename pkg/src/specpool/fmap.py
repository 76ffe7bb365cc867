"""Functional maps: estimation, structural refinement, p2p conversion, ZoomOut."""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import (
    DimensionMismatch,
    KExceedsBasis,
    NonFiniteEnergy,
    OrientationError,
    SingularSystemWarning,
)

DEFAULT_LAMBDA = 1e-3
BRUTE_FORCE_MAX_N = 2000
PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FunctionalMap:
    """``c`` (k x k) carries coefficients on ``source_id`` to coefficients on ``target_id``."""

    c: np.ndarray
    source_id: str = "src"
    target_id: str = "tgt"

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"functional maps must be square, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("functional map has non-finite entries")
        object.__setattr__(self, "c", c)

    @property
    def k(self):
        return self.c.shape[0]

    def truncate(self, k):
        return FunctionalMap(self.c[:k, :k], self.source_id, self.target_id)


@dataclass(frozen=True, eq=False)
class PointToPointMap:
    """``assignment[i]`` is the target vertex matched to source vertex ``i``."""

    assignment: np.ndarray
    source_id: str = "src"
    target_id: str = "tgt"

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64).ravel()
        object.__setattr__(self, "assignment", a)

    def validate(self, n_source, n_target):
        if len(self.assignment) != n_source:
            raise DimensionMismatch(
                f"p2p has {len(self.assignment)} entries, source has {n_source} vertices")
        if self.assignment.min() < 0 or self.assignment.max() >= n_target:
            raise DimensionMismatch(f"p2p entries must lie in [0, {n_target})")


def save_p2p_txt(p2p, path):
    np.savetxt(path, p2p.assignment, fmt="%d")


def load_p2p_txt(path, source_id="src", target_id="tgt"):
    return PointToPointMap(np.loadtxt(path, dtype=np.int64, ndmin=1), source_id, target_id)


# --------------------------------------------------------------------------
# data + commutativity least squares


def fmap_energy(c, a_src, a_tgt, evals_src, evals_tgt, lam):
    """``||C A1 - A2||^2 + lam ||C D1 - D2 C||^2``."""
    data = np.sum((c @ a_src - a_tgt) ** 2)
    comm = np.sum((c * (evals_src[None, :] - evals_tgt[:, None])) ** 2)
    return float(data + lam * comm)


def estimate_fmap(a_src, a_tgt, evals_src, evals_tgt, lam=DEFAULT_LAMBDA,
                  source_id="src", target_id="tgt"):
    """Exact minimizer of the descriptor-preservation + commutativity energy.

    The energy separates over rows of C: row ``l`` solves
    ``(A1 A1^T + lam diag((mu - delta_l)^2)) c_l = A1 a2_l`` with ``mu`` the
    source and ``delta`` the target eigenvalues.
    """
    a_src = np.atleast_2d(np.asarray(a_src, dtype=np.float64))
    a_tgt = np.atleast_2d(np.asarray(a_tgt, dtype=np.float64))
    mu = np.asarray(evals_src, dtype=np.float64)
    delta = np.asarray(evals_tgt, dtype=np.float64)
    k = a_src.shape[0]
    if a_tgt.shape[0] != k or a_src.shape[1] != a_tgt.shape[1]:
        raise DimensionMismatch(f"coefficient shapes {a_src.shape} and {a_tgt.shape} differ")
    if len(mu) != k or len(delta) != k:
        raise DimensionMismatch("eigenvalue vectors must have length k")
    gram = a_src @ a_src.T
    rhs = a_tgt @ a_src.T  # row l is (A1 a2_l)^T
    c = np.empty((k, k))
    flagged = []
    for row in range(k):
        system = gram + lam * np.diag((mu - delta[row]) ** 2)
        w = np.linalg.eigvalsh(system)
        if w[0] <= PIVOT_TOL * max(w[-1], 1e-300):
            flagged.append(row)
            c[row] = np.linalg.pinv(system, hermitian=True) @ rhs[row]
        else:
            c[row] = np.linalg.solve(system, rhs[row])
    if flagged:
        warnings.warn(f"rank-deficient rows {flagged}; used pseudo-inverse", SingularSystemWarning,
                      stacklevel=2)
    return FunctionalMap(c, source_id, target_id)


# --------------------------------------------------------------------------
# bijectivity / orthogonality


def _check_pair(c12, c21):
    if c12.k != c21.k:
        raise DimensionMismatch(f"map sizes differ: {c12.k} vs {c21.k}")
    if c12.source_id != c21.target_id or c12.target_id != c21.source_id:
        raise OrientationError(
            f"maps {c12.source_id}->{c12.target_id} and {c21.source_id}->{c21.target_id} "
            "are not mutually reverse")


def structural_energy(c12, c21):
    """Bijectivity ``||C12 C21 - I||^2`` and orthogonality terms for a map pair.

    Returns ``(bijectivity, orthogonality, total)``.
    """
    _check_pair(c12, c21)
    eye = np.eye(c12.k)
    bij = float(np.sum((c12.c @ c21.c - eye) ** 2))
    orth = float(np.sum((c12.c.T @ c12.c - eye) ** 2) + np.sum((c21.c.T @ c21.c - eye) ** 2))
    return bij, orth, bij + orth


def _pair_energy_and_grad(c12, c21, a1, a2, ev1, ev2, w_data, w_commute, w_struct):
    k = c12.shape[0]
    eye = np.eye(k)
    r12 = c12 @ a1 - a2
    r21 = c21 @ a2 - a1
    m12 = ev1[None, :] - ev2[:, None]   # C12 D1 - D2 C12 = C12 * m12
    m21 = ev2[None, :] - ev1[:, None]
    q12 = c12 * m12
    q21 = c21 * m21
    b = c12 @ c21 - eye
    o12 = c12.T @ c12 - eye
    o21 = c21.T @ c21 - eye
    energy = (w_data * (np.sum(r12 ** 2) + np.sum(r21 ** 2))
              + w_commute * (np.sum(q12 ** 2) + np.sum(q21 ** 2))
              + w_struct * (np.sum(b ** 2) + np.sum(o12 ** 2) + np.sum(o21 ** 2)))
    g12 = (2 * w_data * r12 @ a1.T + 2 * w_commute * q12 * m12
           + w_struct * (2 * b @ c21.T + 4 * c12 @ o12))
    g21 = (2 * w_data * r21 @ a2.T + 2 * w_commute * q21 * m21
           + w_struct * (2 * c12.T @ b + 4 * c21 @ o21))
    return float(energy), g12, g21


def pair_energy(c12, c21, a1, a2, evals1, evals2, w_data=1.0, w_commute=1e-3, w_struct=1.0):
    """Combined energy minimized by :func:`refine_pair_unsupervised`."""
    return _pair_energy_and_grad(np.asarray(c12), np.asarray(c21), a1, a2,
                                 np.asarray(evals1), np.asarray(evals2),
                                 w_data, w_commute, w_struct)[0]


def refine_pair_unsupervised(c12, c21, a1, a2, evals1, evals2, w_data=1.0, w_commute=1e-3,
                             w_struct=1.0, max_iters=2000, grad_tol=1e-7, history=None):
    """Jointly refine a map pair by gradient descent with Armijo backtracking.

    Minimizes the data and commutativity terms of both directions plus the
    bijectivity/orthogonality penalty. ``c12`` maps shape 1 to shape 2, so
    ``C12 a1 ~ a2``. If ``history`` is a list, the energy after every
    accepted step (starting with the initial energy) is appended to it.
    """
    _check_pair(c12, c21)
    x12, x21 = c12.c.copy(), c21.c.copy()
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    ev1 = np.asarray(evals1, dtype=np.float64)[: c12.k]
    ev2 = np.asarray(evals2, dtype=np.float64)[: c12.k]
    weights = (w_data, w_commute, w_struct)
    energy, g12, g21 = _pair_energy_and_grad(x12, x21, a1, a2, ev1, ev2, *weights)
    if not np.isfinite(energy):
        raise NonFiniteEnergy("initial energy is not finite")
    if history is not None:
        history.append(energy)
    step = 1.0
    for _ in range(max_iters):
        gmax = max(np.abs(g12).max(), np.abs(g21).max())
        if gmax < grad_tol:
            break
        gsq = np.sum(g12 ** 2) + np.sum(g21 ** 2)
        step = min(step * 2.0, 1e6)
        while True:
            n12, n21 = x12 - step * g12, x21 - step * g21
            new, ng12, ng21 = _pair_energy_and_grad(n12, n21, a1, a2, ev1, ev2, *weights)
            if np.isfinite(new) and new <= energy - 1e-4 * step * gsq and new < energy:
                break
            step *= 0.5
            if step < 1e-30:
                break
        if step < 1e-30:
            break
        if not np.isfinite(new):
            raise NonFiniteEnergy("energy diverged")
        x12, x21, energy, g12, g21 = n12, n21, new, ng12, ng21
        if history is not None:
            history.append(energy)
    return (FunctionalMap(x12, c12.source_id, c12.target_id),
            FunctionalMap(x21, c21.source_id, c21.target_id))


# --------------------------------------------------------------------------
# conversions


def fmap_from_p2p(p2p, basis_src, basis_tgt, k=None):
    """Functional map ``phi_src^T M_src Pi phi_tgt`` induced by a vertex map.

    The result carries functions on the p2p *target* to the p2p *source*.
    """
    p2p.validate(basis_src.n, basis_tgt.n)
    k = min(basis_src.k, basis_tgt.k) if k is None else k
    if k > basis_src.k or k > basis_tgt.k:
        raise KExceedsBasis(f"k={k} exceeds basis sizes {basis_src.k}, {basis_tgt.k}")
    pulled = basis_tgt.phi[p2p.assignment, :k]
    c = basis_src.phi[:, :k].T @ (basis_src.mass[:, None] * pulled)
    return FunctionalMap(c, p2p.target_id, p2p.source_id)


def nearest_neighbors(query, data):
    """Exact nearest neighbour of each query row; ties go to the smallest index."""
    if len(data) < BRUTE_FORCE_MAX_N:
        return _kernels.nearest_neighbors(query, data)
    tree = cKDTree(data)
    dist, idx = tree.query(query, k=2)
    tie = dist[:, 0] == dist[:, 1]
    out = idx[:, 0].astype(np.int64)
    out[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
    return out


def p2p_from_fmap(c21, basis_src, basis_tgt):
    """Vertex map src -> tgt from a map carrying tgt functions to src.

    Each row of ``phi_src C21`` is matched to its nearest row of ``phi_tgt``.
    """
    k = c21.k
    if k > basis_src.k or k > basis_tgt.k:
        raise KExceedsBasis(f"map size {k} exceeds basis sizes {basis_src.k}, {basis_tgt.k}")
    query = basis_src.phi[:, :k] @ c21.c
    assignment = nearest_neighbors(query, basis_tgt.phi[:, :k])
    return PointToPointMap(assignment, c21.target_id, c21.source_id)


def zoomout_schedule(k_start=30, k_end=120, step=None):
    """Basis sizes visited after the initial one; 30 rounds by default."""
    if step is None:
        step = max(1, int(round((k_end - k_start) / 30)))
    if step < 1 or k_start > k_end:
        raise ValueError("need step >= 1 and k_start <= k_end")
    sizes = list(range(k_start + step, k_end + 1, step))
    if not sizes or sizes[-1] != k_end:
        if k_end > k_start:
            sizes.append(k_end)
    return sizes


def zoomout(p2p_init, basis_src, basis_tgt, k_start=30, k_end=120, step=None):
    """Spectral upsampling refinement of a vertex map.

    Alternates map conversion while growing the basis from ``k_start`` to
    ``k_end``. Returns the final vertex map and the ``k_end`` functional map
    induced by it.
    """
    if k_end > basis_src.k or k_end > basis_tgt.k:
        raise KExceedsBasis(f"k_end={k_end} exceeds basis sizes {basis_src.k}, {basis_tgt.k}")
    c = fmap_from_p2p(p2p_init, basis_src, basis_tgt, k_start)
    for k in zoomout_schedule(k_start, k_end, step):
        p2p = p2p_from_fmap(c, basis_src, basis_tgt)
        c = fmap_from_p2p(p2p, basis_src, basis_tgt, k)
    p2p = p2p_from_fmap(c, basis_src, basis_tgt)
    return p2p, fmap_from_p2p(p2p, basis_src, basis_tgt, k_end)
