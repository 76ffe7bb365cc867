"""Command-line entry points.

``specpool --manifest M --stage S`` runs one pipeline stage (or ``all``);
``specpool-synth DIR`` writes the bundled synthetic collection and a manifest.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import ManifestError, MissingPrerequisite, SpecpoolError, StalePrerequisite
from .mesh import write_off
from .pipeline import STAGES, Pipeline, load_manifest
from .synthetic import blob_collection, random_permutation

EXIT_USAGE = 2


def _fail(stage, exc, status):
    code = exc.code if isinstance(exc, SpecpoolError) else type(exc).__name__
    print(json.dumps({"stage": stage, "code": code, "message": str(exc)}), file=sys.stderr)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="specpool", description=__doc__.splitlines()[0])
    ap.add_argument("--manifest", required=True, help="collection manifest (JSON)")
    ap.add_argument("--stage", required=True, choices=STAGES + ["all"])
    ap.add_argument("--jobs", type=int, default=None, help="worker threads (default: logical cores)")
    ap.add_argument("--force", action="store_true", help="re-run even if artifacts are up to date")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                    help="override a manifest parameter, e.g. --set zoomout.k_end=90")
    ap.add_argument("--out", default="specpool_out", help="output root directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    stage = args.stage
    try:
        config = load_manifest(args.manifest, args.overrides)
        pipe = Pipeline(config, args.out, jobs=args.jobs, force=args.force)
    except ManifestError as exc:
        return _fail(stage, exc, EXIT_USAGE)
    stages = STAGES if stage == "all" else [stage]
    for st in stages:
        try:
            status = pipe.run(st)
        except (MissingPrerequisite, StalePrerequisite, ManifestError) as exc:
            return _fail(st, exc, EXIT_USAGE)
        except Exception as exc:  # noqa: BLE001 - reported as JSON on stderr
            logging.getLogger("specpool").debug("stage failed", exc_info=True)
            return _fail(st, exc, 1)
        print(f"{st}: {status} -> {pipe.path(st)}", file=sys.stderr)
        if st == "eval":
            with open(pipe.path("eval", "mse.csv")) as fh:
                sys.stdout.write(fh.read())
    return 0


def write_synthetic_collection(out_dir, subdivisions=3, seed=0):
    """Four related blobs plus a re-indexed copy of one of them.

    Also writes the ground-truth vertex maps between every pair, which a
    manifest can reference to run the supervised variant.
    """
    os.makedirs(out_dir, exist_ok=True)
    shapes = blob_collection(subdivisions)
    n = shapes[0].n_vertices
    perm = random_permutation(n, seed)
    copy = shapes[1].permuted(perm, name="blob1_perm")
    meshes = shapes + [copy]
    # position of each original vertex inside every mesh
    where = {m.name: np.arange(n) for m in shapes}
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    where["blob1_perm"] = inv
    entries = []
    for m in meshes:
        write_off(m, os.path.join(out_dir, f"{m.name}.off"))
        entries.append({"id": m.name, "path": f"{m.name}.off", "category": "blob", "tag": m.name})
    gt_dir = os.path.join(out_dir, "gt")
    os.makedirs(gt_dir, exist_ok=True)
    gt = []
    for a in meshes:
        for b in meshes:
            if a is b:
                continue
            # vertex where[a][v] of a corresponds to vertex where[b][v] of b
            assign = np.empty(n, dtype=np.int64)
            assign[where[a.name]] = where[b.name]
            rel = os.path.join("gt", f"{a.name}__{b.name}.txt")
            np.savetxt(os.path.join(out_dir, rel), assign, fmt="%d")
            gt.append({"source": a.name, "target": b.name, "path": rel})
    manifest = {"shapes": entries, "templates": {"blob": "blob0"}, "seed": seed,
                "params": {"k2": 32}}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    with open(os.path.join(out_dir, "manifest_supervised.json"), "w") as fh:
        json.dump(dict(manifest, ground_truth=gt), fh, indent=2)
    return os.path.join(out_dir, "manifest.json")


def synth_main(argv=None):
    ap = argparse.ArgumentParser(prog="specpool-synth",
                                 description="write the bundled synthetic collection")
    ap.add_argument("out_dir")
    ap.add_argument("--subdivisions", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(write_synthetic_collection(args.out_dir, args.subdivisions, args.seed))
    return 0


if __name__ == "__main__":
    sys.exit(main())
