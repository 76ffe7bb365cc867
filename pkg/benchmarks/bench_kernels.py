"""Time the numba and pure-numpy kernel paths on representative inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from specpool import _kernels as K
from specpool.synthetic import icosphere


def _cases():
    rng = np.random.default_rng(0)
    mesh = icosphere(5)  # 10242 vertices
    v, f = np.ascontiguousarray(mesh.vertices), np.ascontiguousarray(mesh.faces)
    emb_q, emb_d = rng.standard_normal((2000, 60)), rng.standard_normal((2000, 60))
    pts_a, pts_b = rng.standard_normal((3000, 3)), rng.standard_normal((3000, 3))
    return [
        ("face_cotangents", f"{len(f)} faces", K.face_cotangents_numba, K.face_cotangents_numpy, (v, f)),
        ("nearest_neighbors", "2000x2000, dim 60", K.nearest_neighbors_numba, K.nearest_neighbors_numpy,
         (emb_q, emb_d)),
        ("distance_discrepancy", "3000 points", K.distance_discrepancy_numba, K.distance_discrepancy_numpy,
         (pts_a, pts_b)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"numba available: {K.HAVE_NUMBA}")
    print(f"{'kernel':<22}{'input':<20}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, desc, fast, slow, inputs in _cases():
        np.testing.assert_allclose(fast(*inputs), slow(*inputs), rtol=1e-9)  # also warms the JIT
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{desc:<20}{t_fast:>10.2f}{t_slow:>10.2f}{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
