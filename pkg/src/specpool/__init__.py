"""Spectral pooling of triangle-mesh collections.

Laplacian eigenbases, functional maps and their refinement, consistent
latent bases over map networks, and a linear autoencoder that pools
vertex features into a shared canonical basis.
"""
from .descriptors import FeatureSet, hks, wks, xyz_features
from .fmap import FunctionalMap, PointToPointMap, estimate_fmap, p2p_from_fmap, zoomout
from .mesh import Mesh, load_mesh, write_off
from .network import build_network, compute_cclb, compute_clb
from .pooling import LatentCode, LinearAutoencoder, spectral_pool, spectral_unpool
from .spectral import SpectralBasis, eigenbasis

__version__ = "0.1.0"

__all__ = [
    "FeatureSet", "FunctionalMap", "LatentCode", "LinearAutoencoder", "Mesh",
    "PointToPointMap", "SpectralBasis", "build_network", "compute_cclb", "compute_clb",
    "eigenbasis", "estimate_fmap", "hks", "load_mesh", "p2p_from_fmap", "spectral_pool",
    "spectral_unpool", "wks", "write_off", "xyz_features", "zoomout",
]
