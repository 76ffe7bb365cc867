"""Functional map networks and the (canonical) consistent latent basis."""
import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedGraph,
    EigenFailure,
    K2TooLarge,
    MissingReverseMap,
    SizeMismatch,
)
from .fmap import fmap_from_p2p
from .spectral import fix_signs


@dataclass(frozen=True, eq=False)
class FmapNetwork:
    """Connected graph over shapes; ``maps[(i, j)]`` carries shape i functions to shape j."""

    shape_ids: tuple
    maps: dict
    k: int

    @property
    def n_shapes(self):
        return len(self.shape_ids)

    def index(self, shape_id):
        return self.shape_ids.index(shape_id)

    @property
    def edges(self):
        """Unordered edges as sorted index pairs."""
        return sorted({(min(i, j), max(i, j)) for i, j in self.maps})

    def neighbors(self, i):
        return sorted(j for (a, j) in self.maps if a == i)


def build_network(shape_ids, pairwise_maps):
    """Validate maps and assemble a network.

    ``pairwise_maps`` is an iterable of :class:`FunctionalMap` (or a dict of
    them); each edge needs both directions and all maps share one size.
    """
    shape_ids = tuple(shape_ids)
    if len(set(shape_ids)) != len(shape_ids):
        raise ValueError("shape ids must be unique")
    pos = {s: i for i, s in enumerate(shape_ids)}
    if isinstance(pairwise_maps, dict):
        pairwise_maps = list(pairwise_maps.values())
    maps = {}
    k = None
    for fm in pairwise_maps:
        if fm.source_id not in pos or fm.target_id not in pos:
            raise ValueError(f"map {fm.source_id}->{fm.target_id} references an unknown shape")
        if k is None:
            k = fm.k
        elif fm.k != k:
            raise SizeMismatch(f"map {fm.source_id}->{fm.target_id} has size {fm.k}, expected {k}")
        maps[(pos[fm.source_id], pos[fm.target_id])] = fm.c
    for i, j in maps:
        if (j, i) not in maps:
            raise MissingReverseMap(f"edge {shape_ids[i]}->{shape_ids[j]} lacks its reverse map")
    n = len(shape_ids)
    if n > 1:
        rows = [i for i, _ in maps] or [0]
        cols = [j for _, j in maps] or [0]
        data = np.ones(len(maps)) if maps else np.zeros(1)
        ncomp, labels = connected_components(coo_matrix((data, (rows, cols)), shape=(n, n)),
                                             directed=False)
        if ncomp > 1:
            comps = [[shape_ids[i] for i in np.flatnonzero(labels == c)] for c in range(ncomp)]
            raise DisconnectedGraph(comps)
    if k is None:
        raise ValueError("a network needs at least one map; pass k explicitly via single_shape_network")
    return FmapNetwork(shape_ids, maps, k)


def single_shape_network(shape_id, k):
    return FmapNetwork((shape_id,), {}, k)


@dataclass(frozen=True, eq=False)
class LatentBasisSet:
    y: list                 # per-shape (k1, k1)
    residual: float
    eigenvalues: np.ndarray

    @property
    def k1(self):
        return self.y[0].shape[1]


def consistency_operator(network):
    """Quadratic form Q with ``tr(Y^T Q Y) = sum_(i,j) ||C_ij Y_i - Y_j||^2``."""
    k, n = network.k, network.n_shapes
    Q = np.zeros((n * k, n * k))
    eye = np.eye(k)
    for (i, j), c in network.maps.items():
        si, sj = slice(i * k, (i + 1) * k), slice(j * k, (j + 1) * k)
        Q[si, si] += c.T @ c
        Q[sj, sj] += eye
        Q[si, sj] -= c.T
        Q[sj, si] -= c
    return Q


def consistency_energy(network, y):
    return float(sum(np.sum((c @ y[i] - y[j]) ** 2) for (i, j), c in network.maps.items()))


def compute_clb(network):
    """Consistent latent basis: minimize ``sum ||C_ij Y_i - Y_j||^2`` s.t. ``sum Y_i^T Y_i = I``.

    The stacked minimizer is given by the ``k1`` eigenvectors of the
    consistency operator with smallest eigenvalues.
    """
    k, n = network.k, network.n_shapes
    Q = consistency_operator(network)
    try:
        w, v = scipy.linalg.eigh(Q, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    v = fix_signs(v)
    y = [v[i * k:(i + 1) * k, :] for i in range(n)]
    return LatentBasisSet(y, consistency_energy(network, y), w)


@dataclass(frozen=True, eq=False)
class CanonicalBasis:
    y_tilde: list           # per-shape (k1, k2)
    u: np.ndarray           # (k1, k1) full eigenvector matrix of E
    gamma: np.ndarray       # (k1,) ascending
    e_matrix: np.ndarray    # (k1, k1)
    k2: int
    shape_ids: tuple = ()
    cclb_id: str = field(default="")

    @property
    def k1(self):
        return self.e_matrix.shape[0]

    @property
    def u_k2(self):
        return self.u[:, : self.k2]

    def for_shape(self, shape_id):
        return self.y_tilde[self.shape_ids.index(shape_id)]


def latent_operator(clb, eval_sets):
    """``E = (1/n) sum_i Y_i^T diag(lambda_i) Y_i``."""
    k1 = clb.k1
    E = np.zeros((k1, k1))
    for y, ev in zip(clb.y, eval_sets):
        ev = np.asarray(ev, dtype=np.float64)[: y.shape[0]]
        E += y.T @ (ev[:, None] * y)
    E /= len(clb.y)
    return (E + E.T) / 2


def compute_cclb(clb, eval_sets, k2, shape_ids=None):
    """Diagonalize the latent operator and keep its ``k2`` lowest eigenvectors."""
    k1 = clb.k1
    if k2 > k1:
        raise K2TooLarge(f"k2={k2} exceeds k1={k1}")
    if k2 < 1:
        raise ValueError("k2 must be positive")
    if len(eval_sets) != len(clb.y):
        raise ValueError("need one eigenvalue vector per shape")
    E = latent_operator(clb, eval_sets)
    gamma, u = np.linalg.eigh(E)
    u = fix_signs(u)
    y_tilde = [y @ u[:, :k2] for y in clb.y]
    shape_ids = tuple(shape_ids) if shape_ids is not None else tuple(range(len(clb.y)))
    h = hashlib.sha256()
    for arr in [u[:, :k2], *y_tilde]:
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr(tuple(str(s) for s in shape_ids)).encode())
    return CanonicalBasis(y_tilde, u, gamma, E, k2, shape_ids, h.hexdigest()[:16])


def network_from_p2p(shape_ids, bases, p2p_maps, k1):
    """Network with ``C_ij`` induced by vertex maps ``j -> i``.

    ``p2p_maps[(j, i)]`` maps vertices of shape j to shape i (ids as keys).
    """
    idx = {s: i for i, s in enumerate(shape_ids)}
    maps = []
    for (src, tgt), p2p in sorted(p2p_maps.items(), key=lambda kv: (idx[kv[0][0]], idx[kv[0][1]])):
        maps.append(fmap_from_p2p(p2p, bases[idx[src]], bases[idx[tgt]], k1))
    return build_network(shape_ids, maps)

