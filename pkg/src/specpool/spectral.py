"""Truncated Laplace-Beltrami eigenbases and the projection/lifting operators."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, DimensionMismatch, KTooLarge
from .mesh import cotangent_stiffness, vertex_areas

DEFAULT_K = 30
DENSE_MAX_N = 500
SHIFT = -1e-8
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``k`` eigenpairs of ``W phi = lambda M phi`` with M-orthonormal ``phi``."""

    phi: np.ndarray     # (n, k)
    evals: np.ndarray   # (k,) ascending
    mass: np.ndarray    # (n,) lumped areas

    @property
    def k(self):
        return self.phi.shape[1]

    @property
    def n(self):
        return self.phi.shape[0]

    def truncate(self, k):
        if k > self.k:
            raise KTooLarge(f"requested {k} basis functions, basis has {self.k}")
        return SpectralBasis(self.phi[:, :k], self.evals[:k], self.mass)

    @property
    def pinv(self):
        """Left inverse ``phi^T M``."""
        return self.phi.T * self.mass


def fix_signs(vecs, rtol=1e-9):
    """Flip columns so the entry of largest magnitude is positive.

    Entries within ``rtol`` of the column maximum count as tied; the first of
    them decides.
    """
    vecs = np.array(vecs, dtype=np.float64, copy=True)
    if vecs.size == 0:
        return vecs
    mags = np.abs(vecs)
    top = mags.max(axis=0)
    idx = np.argmax(mags >= top * (1.0 - rtol), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _m_orthonormalize(phi, mass):
    gram = phi.T @ (phi * mass[:, None])
    L = np.linalg.cholesky((gram + gram.T) / 2)
    return scipy.linalg.solve_triangular(L, phi.T, lower=True).T


def eigenbasis(mesh, k=DEFAULT_K, *, dense_max_n=DENSE_MAX_N, stiffness=None, mass=None):
    """Solve ``W phi = lambda M phi`` for the ``k`` smallest eigenvalues.

    Dense generalized solver up to ``dense_max_n`` vertices, shift-invert
    Lanczos (ARPACK) above. Eigenvector signs are fixed by :func:`fix_signs`.
    """
    W = cotangent_stiffness(mesh) if stiffness is None else stiffness
    m = vertex_areas(mesh) if mass is None else np.asarray(mass, dtype=np.float64)
    n = W.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if k >= n:
        raise KTooLarge(f"k={k} must be smaller than the vertex count {n}")
    if n <= dense_max_n:
        evals, phi = scipy.linalg.eigh(W.toarray(), np.diag(m), subset_by_index=[0, k - 1])
    else:
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            evals, phi = spla.eigsh(
                W.tocsc(), k=k, M=sp.diags(m).tocsc(), sigma=SHIFT, which="LM",
                v0=v0, tol=RESIDUAL_TOL, maxiter=max(10 * k, 100),
            )
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(f"eigensolver did not converge for k={k}: {exc}") from exc
        order = np.argsort(evals)
        evals, phi = evals[order], phi[:, order]
    phi = _m_orthonormalize(phi, m)
    scale = max(abs(evals[-1]), 1.0)
    resid = np.linalg.norm(W @ phi - (phi * m[:, None]) * evals, axis=0) / np.linalg.norm(phi, axis=0)
    if not np.all(resid <= 1e-6 * scale):
        raise ConvergenceFailure(f"eigen-residual {resid.max():.3e} too large")
    # numerical zeros below the shift are clipped so the spectrum is nonnegative
    evals = np.where(np.abs(evals) <= 1e-9 * scale, np.maximum(evals, 0.0), evals)
    phi = fix_signs(phi)
    phi.setflags(write=False)
    evals.setflags(write=False)
    m.setflags(write=False)
    return SpectralBasis(phi, evals, m)


def project(basis, features):
    """Spectral coefficients ``phi^T M F`` of vertex functions ``F``."""
    F = np.asarray(features, dtype=np.float64)
    if F.shape[0] != basis.n:
        raise DimensionMismatch(f"features have {F.shape[0]} rows, basis has {basis.n} vertices")
    if F.ndim == 1:
        return basis.phi.T @ (basis.mass * F)
    return basis.phi.T @ (basis.mass[:, None] * F)


def lift(basis, coeffs):
    """Synthesize vertex functions ``phi @ coeffs``."""
    A = np.asarray(coeffs, dtype=np.float64)
    if A.shape[0] != basis.k:
        raise DimensionMismatch(f"coefficients have {A.shape[0]} rows, basis has k={basis.k}")
    return basis.phi @ A


def m_inner(basis, f, g):
    return float(np.sum(basis.mass[:, None] * np.atleast_2d(f.T).T * np.atleast_2d(g.T).T))
