import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specpool.descriptors import HKS
from specpool.errors import CclbMismatch, RankDeficientBasisWarning, WrongFeatureKind
from specpool.fmap import PointToPointMap
from specpool.mesh import vertex_areas
from specpool.network import compute_cclb, compute_clb, single_shape_network
from specpool.pooling import (
    LatentCode,
    TemplateRef,
    combined_loss,
    decode_to_template,
    latent_pinv,
    mse_eval,
    p2p_loss,
    pairwise_distance_loss,
    spectral_pool,
    spectral_unpool,
    subsample_indices,
)
from specpool.spectral import lift, project

from collection import collection_autoencoder


def _single_shape_template(mesh, basis, k):
    cc = compute_cclb(compute_clb(single_shape_network(mesh.name, k)), [basis.evals[:k]], k, [mesh.name])
    return TemplateRef(mesh, basis, cc.y_tilde[0], cc.cclb_id)


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


# ---------------------------------------------------------------- pool / unpool


def test_single_shape_full_basis_is_spectral_projection(blob2):
    from specpool.spectral import eigenbasis

    basis = eigenbasis(blob2, 20)
    t = _single_shape_template(blob2, basis, 20)
    F = blob2.vertices
    code = spectral_pool(basis, t.y_tilde, F, blob2.name, t.cclb_id)
    np.testing.assert_allclose(spectral_unpool(t, code), lift(basis, project(basis, F)), atol=1e-10)


def test_zero_code_unpools_to_zero(blob2):
    from specpool.spectral import eigenbasis

    basis = eigenbasis(blob2, 8)
    t = _single_shape_template(blob2, basis, 8)
    out = spectral_unpool(t, LatentCode(np.zeros((8, 3)), "z", t.cclb_id))
    assert out.shape == (blob2.n_vertices, 3) and not out.any()


def test_pinv_rank_and_warning():
    y = np.zeros((4, 2))
    y[0, 0] = 1.0
    inv, rank = latent_pinv(y)
    assert rank == 1
    np.testing.assert_allclose(inv, np.linalg.pinv(y))


def test_rank_deficient_pool_warns(blob2):
    from specpool.spectral import eigenbasis

    basis = eigenbasis(blob2, 4)
    y = np.zeros((4, 2))
    y[0, 0] = 1.0
    with pytest.warns(RankDeficientBasisWarning):
        spectral_pool(basis, y, blob2.vertices)


def test_global_mean_scale(sphere_collection, sphere_collection_bases):
    """With one latent function, pooling is a fixed multiple of the area-weighted mean.

    The multiple is the square root of the total area of the collection, a
    consequence of both orthonormality constraints; unpooling undoes it so
    the round trip replicates the mean exactly.
    """
    ae, _ = collection_autoencoder(sphere_collection, sphere_collection_bases, 1, 1)
    total_area = sum(vertex_areas(m).sum() for m in sphere_collection)
    means, codes = [], []
    for m in sphere_collection:
        a = vertex_areas(m)
        means.append(a @ m.vertices / a.sum())
        codes.append(ae.encode(m.name).z[0])
        for t in sphere_collection:
            rec = ae.decode(ae.encode(m.name), t.name).vertices
            np.testing.assert_allclose(rec, np.broadcast_to(means[-1], rec.shape), atol=1e-10)
    means, codes = np.array(means), np.array(codes)
    big = np.unravel_index(np.argmax(np.abs(means)), means.shape)
    sign = np.sign(codes[big] / means[big])
    np.testing.assert_allclose(codes, sign * np.sqrt(total_area) * means, atol=1e-10)


def test_reindexed_copy_gets_same_code(blob3_pair, blob3_pair_bases):
    m, m2, perm, inv = blob3_pair
    maps = {(m.name, m2.name): PointToPointMap(inv, m.name, m2.name),
            (m2.name, m.name): PointToPointMap(perm, m2.name, m.name)}
    ae, clb = collection_autoencoder([m, m2], list(blob3_pair_bases), 60, 30, maps)
    assert clb.residual <= 1e-10
    z1, z2 = ae.encode(m.name).z, ae.encode(m2.name).z
    assert np.abs(z1 - z2).max() <= 1e-5 * np.abs(z1).max()
    r1, r2 = ae.decode(ae.encode(m.name), m.name), ae.decode(ae.encode(m2.name), m.name)
    assert abs(mse_eval(r1, m) - mse_eval(r2, m)) <= 1e-6


def test_guards(blob2):
    from specpool.spectral import eigenbasis

    basis = eigenbasis(blob2, 4)
    t = _single_shape_template(blob2, basis, 4)
    with pytest.raises(CclbMismatch):
        spectral_unpool(t, LatentCode(np.zeros((4, 3)), "x", "other"))
    with pytest.raises(WrongFeatureKind):
        decode_to_template(LatentCode(np.zeros((4, 3)), "x", t.cclb_id, HKS), t)
    with pytest.raises(WrongFeatureKind):
        decode_to_template(LatentCode(np.zeros((4, 2)), "x", t.cclb_id), t)


# ---------------------------------------------------------------- losses


def test_p2p_loss_brute_force():
    rng = np.random.default_rng(0)
    S, X = rng.standard_normal((7, 3)), rng.standard_normal((5, 3))
    a = rng.integers(0, 7, 5)
    Pi = np.zeros((5, 7))
    Pi[np.arange(5), a] = 1
    assert p2p_loss(a, S, X) == pytest.approx(np.sum((Pi @ S - X) ** 2), rel=1e-12)
    # unit offset of every vertex costs one per vertex
    assert p2p_loss(np.arange(5), X, X + [1, 0, 0]) == pytest.approx(5.0)


def test_distance_loss_scaling_example():
    X = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    d = np.sum((X[:, None] - X[None]) ** 2, axis=-1)
    # doubling every distance multiplies squared distances by four
    assert pairwise_distance_loss(X, 2 * X) == pytest.approx(9 * np.sum(d ** 2))
    assert pairwise_distance_loss(X, X) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_distance_loss_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((30, 3)), rng.standard_normal((30, 3))
    R, t = _random_rotation(rng), rng.standard_normal(3) * 5
    base = pairwise_distance_loss(A, B)
    assert pairwise_distance_loss(A, B @ R.T + t) == pytest.approx(base, rel=1e-9)


def test_subsampling_is_seeded():
    idx = subsample_indices(100, 10, seed=0)
    np.testing.assert_array_equal(idx, subsample_indices(100, 10, seed=0))
    assert len(np.unique(idx)) == 10
    np.testing.assert_array_equal(subsample_indices(5, 10), np.arange(5))
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((50, 3)), rng.standard_normal((50, 3))
    sub = subsample_indices(50, 20)
    assert pairwise_distance_loss(A, B, max_points=20) == pytest.approx(
        pairwise_distance_loss(A[sub], B[sub]), rel=1e-12)


def test_combined_loss_and_mse():
    assert combined_loss(1.0, 0.5) == 6.0
    X = np.zeros((4, 3))
    assert mse_eval(X, X) == 0.0
    assert mse_eval(X + [0.01, 0, 0], X) == pytest.approx(1.0)
    G = np.arange(12.0).reshape(4, 3)
    assert mse_eval(G[[2, 0, 3, 1]], G, p2p=[2, 0, 3, 1]) == 0.0
