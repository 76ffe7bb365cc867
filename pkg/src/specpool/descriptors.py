"""Spectral point descriptors used as probe functions for map estimation."""
from dataclasses import dataclass, field

import numpy as np

from .errors import KTooSmall

HKS, WKS, XYZ = "HKS", "WKS", "XYZ"


@dataclass(frozen=True, eq=False)
class FeatureSet:
    values: np.ndarray      # (n, d)
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.values.shape[1]


def _positive_spectrum(evals):
    evals = np.asarray(evals, dtype=np.float64)
    return evals > 1e-9 * max(abs(evals[-1]), 1e-300)


def hks(basis, num_times=64, t_min=None, t_max=None):
    """Heat kernel signature ``sum_j exp(-lambda_j t) phi_j(x)^2``.

    Times are log-spaced in ``[t_min, t_max]`` (defaults ``4 ln10 / lambda_max``
    to ``4 ln10 / lambda_1``). Each column is scaled to unit M-norm.
    """
    evals = basis.evals
    if t_min is None or t_max is None:
        pos = evals[_positive_spectrum(evals)]
        if pos.size == 0:
            lo, hi = 1e-2, 1.0
        else:
            lo, hi = 4 * np.log(10) / pos[-1], 4 * np.log(10) / pos[0]
        t_min = lo if t_min is None else t_min
        t_max = hi if t_max is None else t_max
    if not 0 < t_min < t_max and not (num_times == 1 and 0 < t_min <= t_max):
        raise ValueError("need 0 < t_min < t_max")
    times = np.geomspace(t_min, t_max, num_times)
    heat = np.exp(-np.outer(evals, times))           # (k, T)
    values = (basis.phi ** 2) @ heat                  # (n, T)
    norms = np.sqrt(basis.mass @ values ** 2)
    values = values / norms
    return FeatureSet(values, HKS, {"times": times.tolist()})


def wks(basis, num_energies=128, variance_scale=7.0):
    """Wave kernel signature on log-eigenvalue energies, zero eigenvalues skipped.

    Energies are evenly spaced over ``[log lambda_1, log lambda_max]`` shrunk by
    ``2 sigma`` at both ends with ``sigma = variance_scale * range / num_energies``.
    Each column has unit mass-weighted sum.
    """
    if basis.k < 2:
        raise KTooSmall("WKS needs at least two eigenpairs")
    keep = _positive_spectrum(basis.evals)
    if not keep.any():
        raise KTooSmall("WKS needs a positive eigenvalue")
    log_ev = np.log(basis.evals[keep])
    phi2 = basis.phi[:, keep] ** 2
    e_min, e_max = log_ev[0], log_ev[-1]
    sigma = variance_scale * (e_max - e_min) / num_energies
    if sigma <= 0:
        sigma = 1.0
    # with fewer than 28 energies at the default scale this reverses the order
    e_min, e_max = e_min + 2 * sigma, e_max - 2 * sigma
    energies = np.linspace(e_min, e_max, num_energies)
    gauss = np.exp(-((energies[None, :] - log_ev[:, None]) ** 2) / (2 * sigma ** 2))  # (k', E)
    coef = 1.0 / gauss.sum(axis=0)
    values = (phi2 @ gauss) * coef
    return FeatureSet(values, WKS, {"energies": energies.tolist(), "sigma": float(sigma),
                                    "variance_scale": float(variance_scale)})


def xyz_features(mesh):
    return FeatureSet(np.array(mesh.vertices), XYZ, {})
