"""Stage runner: manifest handling, artifact layout and staleness tracking."""
import copy
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import descriptors as desc
from .errors import ManifestError, MissingPrerequisite, MissingReverseMap, StalePrerequisite
from .fmap import (
    PointToPointMap,
    estimate_fmap,
    fmap_from_p2p,
    load_p2p_txt,
    p2p_from_fmap,
    refine_pair_unsupervised,
    save_p2p_txt,
    zoomout,
)
from .latent import interpolate, pca_embed, write_embedding_csv
from .mesh import load_mesh, normalize_unit_box, quality_report, write_off
from .network import LatentBasisSet, build_network, compute_cclb, compute_clb
from .pooling import (
    LatentCode,
    LinearAutoencoder,
    combined_loss,
    mse_eval,
    p2p_loss,
    pairwise_distance_loss,
)
from .smat import read_smat, write_smat
from .spectral import SpectralBasis, eigenbasis, project

log = logging.getLogger(__name__)

STAGES = ["laplacian", "descriptors", "fmap", "zoomout", "network", "cclb",
          "encode", "decode", "interp", "embed", "eval"]

DEFAULT_PARAMS = {
    "k": 30,
    "k1": 120,
    "k2": None,
    "basis_k": None,
    "normalize": True,
    "edges": "all",
    "descriptor": {"kind": "WKS", "num_energies": 128, "variance_scale": 7.0, "num_times": 64},
    "fmap": {"lambda": 1e-3, "refine": False, "w_data": 1.0, "w_commute": 1e-3,
             "w_struct": 1.0, "max_iters": 2000},
    "zoomout": {"k_start": 30, "k_end": 120, "step": None},
    "loss": {"lambda": 10.0, "max_points": 20000},
    "interp": {"pairs": None, "steps": 5},
    "embed": {"dim": 2},
}

# parameters each stage depends on (beyond its upstream artifacts)
STAGE_KEYS = {
    "laplacian": ["basis_k", "k", "k1", "normalize", "zoomout"],
    "descriptors": ["descriptor"],
    "fmap": ["k", "fmap", "edges"],
    "zoomout": ["zoomout"],
    "network": ["k1", "edges", "ground_truth"],
    "cclb": ["k2", "k1"],
    "encode": [],
    "decode": ["templates"],
    "interp": ["interp", "templates"],
    "embed": ["embed"],
    "eval": ["loss", "templates"],
}


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(obj):
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override(text):
    """``a.b=value`` -> (["a", "b"], value); values are JSON when they parse."""
    if "=" not in text:
        raise ManifestError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip().split("."), val


def apply_overrides(config, overrides):
    config = copy.deepcopy(config)
    for text in overrides or []:
        path, val = parse_override(text)
        node = config if path[0] in ("seed", "templates", "ground_truth") else config["params"]
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ManifestError(f"override {text!r} descends into a non-object")
        node[path[-1]] = val
    return config


def load_manifest(path, overrides=()):
    """Read and validate a collection manifest, returning the resolved config."""
    path = os.path.abspath(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    base = os.path.dirname(path)
    shapes = raw.get("shapes") or []
    if not shapes:
        raise ManifestError("manifest lists no shapes")
    resolved_shapes = []
    for s in shapes:
        if "id" not in s or "path" not in s:
            raise ManifestError(f"shape entry {s} needs 'id' and 'path'")
        p = s["path"] if os.path.isabs(s["path"]) else os.path.join(base, s["path"])
        resolved_shapes.append({"id": str(s["id"]), "path": os.path.normpath(p),
                                "category": s.get("category", "default"),
                                "tag": str(s.get("tag", ""))})
    ids = [s["id"] for s in resolved_shapes]
    if len(set(ids)) != len(ids):
        raise ManifestError("shape ids must be unique")
    gt = []
    for g in raw.get("ground_truth") or []:
        p = g["path"] if os.path.isabs(g["path"]) else os.path.join(base, g["path"])
        gt.append({"source": str(g["source"]), "target": str(g["target"]), "path": os.path.normpath(p)})
    config = {
        "shapes": resolved_shapes,
        "params": _merge(DEFAULT_PARAMS, raw.get("params")),
        "templates": dict(raw.get("templates") or {}),
        "ground_truth": gt,
        "seed": int(raw.get("seed", 0)),
    }
    config = apply_overrides(config, overrides)
    validate_config(config)
    return config


def resolved_k2(params):
    if params.get("k2") is not None:
        return int(params["k2"])
    # k2 * F ~ 1024 with XYZ features (F = 3), capped at k1
    return int(min(params["k1"], max(1, round(1024 / 3))))


def resolved_basis_k(params):
    if params.get("basis_k") is not None:
        return int(params["basis_k"])
    return int(max(params["k"], params["k1"], params["zoomout"]["k_end"]))


def validate_config(config):
    p = config["params"]
    ids = [s["id"] for s in config["shapes"]]
    for s in config["shapes"]:
        if not os.path.exists(s["path"]):
            raise ManifestError(f"shape file {s['path']} does not exist")
    k, k1, k2 = int(p["k"]), int(p["k1"]), resolved_k2(p)
    if k < 2:
        raise ManifestError("k must be >= 2")
    if not 1 <= k2 <= k1:
        raise ManifestError(f"need 1 <= k2 <= k1, got k2={k2}, k1={k1}")
    supervised = bool(config["ground_truth"])
    zo = p["zoomout"]
    if not supervised and k1 > zo["k_end"]:
        raise ManifestError(f"k1={k1} exceeds the ZoomOut output size {zo['k_end']}")
    if not zo["k_start"] <= zo["k_end"]:
        raise ManifestError("zoomout.k_start must not exceed zoomout.k_end")
    if resolved_basis_k(p) < max(k, k1):
        raise ManifestError("basis_k must cover k and k1")
    for cat, tid in config["templates"].items():
        if tid not in ids:
            raise ManifestError(f"template {tid!r} for category {cat!r} is not a collection shape")
    for g in config["ground_truth"]:
        if g["source"] not in ids or g["target"] not in ids:
            raise ManifestError(f"ground-truth map {g['source']}->{g['target']} references unknown shapes")
        if not os.path.exists(g["path"]):
            raise ManifestError(f"ground-truth file {g['path']} does not exist")


def manifest_hash(config):
    return _digest(config)[:12]


def _pair_name(a, b):
    return f"{a}__{b}"


class Pipeline:
    """Runs stages for one resolved manifest inside ``out_root/<manifest hash>``."""

    def __init__(self, config, out_root, jobs=None, force=False):
        self.config = config
        self.params = config["params"]
        self.out = os.path.join(os.path.abspath(out_root), manifest_hash(config))
        self.jobs = jobs or os.cpu_count() or 1
        self.force = force
        self.ids = [s["id"] for s in config["shapes"]]
        self.shapes = {s["id"]: s for s in config["shapes"]}
        self.supervised = bool(config["ground_truth"])
        os.makedirs(self.out, exist_ok=True)
        cfg_path = os.path.join(self.out, "resolved_config.json")
        with open(cfg_path + ".tmp", "w") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
        os.replace(cfg_path + ".tmp", cfg_path)

    # ---------------------------------------------------------------- layout

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def _dir(self, stage):
        d = self.path(stage)
        os.makedirs(d, exist_ok=True)
        return d

    def _map(self, fn, items):
        items = list(items)
        if self.jobs <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))

    def ordered_pairs(self):
        mode = self.params["edges"]
        if self.supervised:
            pairs = [(g["target"], g["source"]) for g in self.config["ground_truth"]]
            return sorted(set(pairs), key=lambda p: (self.ids.index(p[0]), self.ids.index(p[1])))
        if mode == "all":
            und = [(a, b) for i, a in enumerate(self.ids) for b in self.ids[i + 1:]]
        elif mode == "star":
            root = self.templates_by_id()[self.ids[0]]
            und = [(root, s) for s in self.ids if s != root]
        elif isinstance(mode, list):
            und = [tuple(map(str, e)) for e in mode]
        else:
            raise ManifestError(f"unknown edges mode {mode!r}")
        return [p for a, b in und for p in ((a, b), (b, a))]

    def templates_by_id(self):
        """Template id for each shape: manifest choice per category, else the first member."""
        out = {}
        chosen = dict(self.config["templates"])
        for s in self.config["shapes"]:
            cat = s["category"]
            chosen.setdefault(cat, s["id"])
            out[s["id"]] = chosen[cat]
        return out

    # ---------------------------------------------------------------- stamps

    def prerequisites(self, stage):
        if stage == "network":
            return ["laplacian"] if self.supervised else ["zoomout"]
        deps = {
            "laplacian": [], "descriptors": ["laplacian"], "fmap": ["descriptors"],
            "zoomout": ["fmap"], "cclb": ["network"], "encode": ["cclb"], "decode": ["encode"],
            "interp": ["encode"], "embed": ["encode"], "eval": ["decode"],
        }
        return deps[stage]

    def _stage_config(self, stage):
        cfg = {}
        for key in STAGE_KEYS[stage]:
            if key in ("templates", "ground_truth"):
                cfg[key] = self.config[key]
            else:
                cfg[key] = self.params.get(key)
        if stage == "laplacian":
            cfg["shapes"] = self.config["shapes"]
        if stage == "embed":
            cfg["tags"] = [(s["id"], s["category"], s["tag"]) for s in self.config["shapes"]]
        cfg["seed"] = self.config["seed"]
        cfg["supervised"] = self.supervised
        return cfg

    def _sources(self, stage):
        if stage == "laplacian":
            return [s["path"] for s in self.config["shapes"]]
        if stage == "network" and self.supervised:
            return [g["path"] for g in self.config["ground_truth"]]
        return []

    def _stamp_path(self, stage):
        return self.path("stamps", f"{stage}.json")

    def read_stamp(self, stage):
        try:
            with open(self._stamp_path(stage)) as fh:
                return json.load(fh)
        except (OSError, json.JSONDecodeError):
            return None

    @staticmethod
    def stamp_digest(stamp):
        return _digest(stamp)

    def is_current(self, stage, _seen=None):
        stamp = self.read_stamp(stage)
        if stamp is None:
            return False
        if stamp.get("config") != _digest(self._stage_config(stage)):
            return False
        for src, sha in stamp.get("sources", {}).items():
            if not os.path.exists(src) or _sha256_file(src) != sha:
                return False
        for rel, sha in stamp.get("outputs", {}).items():
            p = self.path(rel)
            if not os.path.exists(p) or _sha256_file(p) != sha:
                return False
        for dep in self.prerequisites(stage):
            dep_stamp = self.read_stamp(dep)
            if dep_stamp is None or stamp.get("inputs", {}).get(dep) != self.stamp_digest(dep_stamp):
                return False
            if not self.is_current(dep):
                return False
        return True

    def _write_stamp(self, stage, outputs):
        stamp = {
            "stage": stage,
            "config": _digest(self._stage_config(stage)),
            "sources": {p: _sha256_file(p) for p in self._sources(stage)},
            "inputs": {d: self.stamp_digest(self.read_stamp(d)) for d in self.prerequisites(stage)},
            "outputs": {os.path.relpath(p, self.out): _sha256_file(p) for p in sorted(outputs)},
        }
        os.makedirs(self.path("stamps"), exist_ok=True)
        tmp = self._stamp_path(stage) + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(stamp, fh, indent=2, sort_keys=True)
        os.replace(tmp, self._stamp_path(stage))

    # ---------------------------------------------------------------- running

    def run(self, stage):
        """Run one stage; returns ``"ran"`` or ``"up-to-date"``."""
        if stage not in STAGES:
            raise ManifestError(f"unknown stage {stage!r}")
        for dep in self.prerequisites(stage):
            if self.read_stamp(dep) is None:
                raise MissingPrerequisite(f"stage {stage!r} needs stage {dep!r} to run first")
            if not self.is_current(dep):
                raise StalePrerequisite(f"stage {dep!r} is out of date; re-run it before {stage!r}")
        if not self.force and self.is_current(stage):
            return "up-to-date"
        outputs = getattr(self, f"_stage_{stage}")()
        self._write_stamp(stage, outputs)
        return "ran"

    def run_all(self):
        return {stage: self.run(stage) for stage in STAGES}

    # ---------------------------------------------------------------- loaders

    def mesh(self, sid):
        return load_mesh(self.path("laplacian", f"{sid}.off"))

    def basis(self, sid, k=None):
        d = read_smat(self.path("laplacian", f"{sid}.smat"))
        b = SpectralBasis(d["phi"], d["evals"].ravel(), d["mass"].ravel())
        return b if k is None else b.truncate(k)

    def network_p2p(self):
        """Vertex maps used to build the network, keyed by (source, target)."""
        d = read_smat(self.path("network", "p2p.smat"))
        out = {}
        for name, arr in d.items():
            src, tgt = name.split("__")
            out[(src, tgt)] = PointToPointMap(arr.ravel().astype(np.int64), src, tgt)
        return out

    def cclb(self):
        d = read_smat(self.path("cclb", "cclb.smat"))
        with open(self.path("cclb", "cclb.json")) as fh:
            meta = json.load(fh)
        from .network import CanonicalBasis

        return CanonicalBasis([d[f"Ytilde/{s}"] for s in meta["shape_ids"]], d["U"],
                              d["Gamma"].ravel(), d["E"], meta["k2"], tuple(meta["shape_ids"]),
                              meta["cclb_id"])

    def code(self, sid):
        d = read_smat(self.path("encode", f"{sid}.smat"))
        with open(self.path("encode", f"{sid}.json")) as fh:
            meta = json.load(fh)
        return LatentCode(d["z"], meta["shape_id"], meta["cclb_id"], meta["kind"])

    def autoencoder(self):
        return LinearAutoencoder({s: self.mesh(s) for s in self.ids},
                                 {s: self.basis(s) for s in self.ids}, self.cclb())

    # ---------------------------------------------------------------- stages

    def _stage_laplacian(self):
        d = self._dir("laplacian")
        kb = resolved_basis_k(self.params)

        def work(sid):
            m = load_mesh(self.shapes[sid]["path"])
            if self.params["normalize"]:
                m = normalize_unit_box(m)
            m = m.with_vertices(m.vertices, name=sid)
            b = eigenbasis(m, kb)
            off = os.path.join(d, f"{sid}.off")
            write_off(m, off)
            smat = os.path.join(d, f"{sid}.smat")
            write_smat(smat, {"phi": b.phi, "evals": b.evals, "mass": b.mass})
            rep = os.path.join(d, f"{sid}.quality.json")
            with open(rep, "w") as fh:
                json.dump(quality_report(m), fh, indent=2, sort_keys=True)
            return [off, smat, rep]

        return [p for ps in self._map(work, self.ids) for p in ps]

    def _stage_descriptors(self):
        d = self._dir("descriptors")
        cfg = self.params["descriptor"]

        def work(sid):
            b = self.basis(sid)
            kind = cfg["kind"].upper()
            if kind == desc.WKS:
                fs = desc.wks(b, cfg["num_energies"], cfg["variance_scale"])
            elif kind == desc.HKS:
                fs = desc.hks(b, cfg["num_times"])
            elif kind == desc.XYZ:
                fs = desc.xyz_features(self.mesh(sid))
            else:
                raise ManifestError(f"unknown descriptor kind {cfg['kind']!r}")
            smat = os.path.join(d, f"{sid}.smat")
            write_smat(smat, {"values": fs.values})
            side = os.path.join(d, f"{sid}.json")
            with open(side, "w") as fh:
                json.dump({"kind": fs.kind, "params": fs.params}, fh, sort_keys=True)
            return [smat, side]

        return [p for ps in self._map(work, self.ids) for p in ps]

    def _stage_fmap(self):
        d = self._dir("fmap")
        if self.supervised:
            note = os.path.join(d, "bypassed.json")
            with open(note, "w") as fh:
                json.dump({"bypassed": True, "reason": "ground-truth maps supplied"}, fh)
            return [note]
        k = int(self.params["k"])
        cfg = self.params["fmap"]
        bases = {s: self.basis(s, k) for s in self.ids}
        coeffs = {s: project(bases[s], read_smat(self.path("descriptors", f"{s}.smat"))["values"])
                  for s in self.ids}

        def estimate(pair):
            i, j = pair
            return estimate_fmap(coeffs[i], coeffs[j], bases[i].evals, bases[j].evals,
                                 cfg["lambda"], i, j)

        pairs = self.ordered_pairs()
        fmaps = dict(zip(pairs, self._map(estimate, pairs)))
        if cfg.get("refine"):
            for i, j in pairs:
                if self.ids.index(i) < self.ids.index(j):
                    fmaps[(i, j)], fmaps[(j, i)] = refine_pair_unsupervised(
                        fmaps[(i, j)], fmaps[(j, i)], coeffs[i], coeffs[j],
                        bases[i].evals, bases[j].evals, cfg["w_data"], cfg["w_commute"],
                        cfg["w_struct"], cfg["max_iters"])

        def convert(pair):
            i, j = pair
            c = fmaps[pair]  # carries i -> j, hence yields the vertex map j -> i
            p2p = p2p_from_fmap(c, bases[j], bases[i])
            path = os.path.join(d, f"{_pair_name(i, j)}.smat")
            write_smat(path, {"C": c.c, "p2p": p2p.assignment})
            return path

        return self._map(convert, pairs)

    def _fmap_stage_p2p(self):
        """Vertex maps (source, target) produced by the fmap stage."""
        out = {}
        for i, j in self.ordered_pairs():
            d = read_smat(self.path("fmap", f"{_pair_name(i, j)}.smat"))
            out[(j, i)] = PointToPointMap(d["p2p"].ravel().astype(np.int64), j, i)
        return out

    def _stage_zoomout(self):
        d = self._dir("zoomout")
        if self.supervised:
            note = os.path.join(d, "bypassed.json")
            with open(note, "w") as fh:
                json.dump({"bypassed": True, "reason": "ground-truth maps supplied"}, fh)
            return [note]
        zo = self.params["zoomout"]
        init = self._fmap_stage_p2p()
        bases = {s: self.basis(s) for s in self.ids}

        def work(key):
            src, tgt = key
            p2p, c = zoomout(init[key], bases[src], bases[tgt], zo["k_start"], zo["k_end"], zo["step"])
            path = os.path.join(d, f"{_pair_name(src, tgt)}.smat")
            write_smat(path, {"p2p": p2p.assignment, "C": c.c})
            txt = os.path.join(d, f"{_pair_name(src, tgt)}.txt")
            save_p2p_txt(p2p, txt)
            return [path, txt]

        keys = sorted(init, key=lambda p: (self.ids.index(p[0]), self.ids.index(p[1])))
        return [p for ps in self._map(work, keys) for p in ps]

    def _collect_p2p(self):
        if self.supervised:
            out = {}
            for g in self.config["ground_truth"]:
                out[(g["source"], g["target"])] = load_p2p_txt(g["path"], g["source"], g["target"])
            return out
        out = {}
        for i, j in self.ordered_pairs():
            d = read_smat(self.path("zoomout", f"{_pair_name(j, i)}.smat"))
            out[(j, i)] = PointToPointMap(d["p2p"].ravel().astype(np.int64), j, i)
        return out

    def _stage_network(self):
        d = self._dir("network")
        k1 = int(self.params["k1"])
        p2p = self._collect_p2p()
        bases = {s: self.basis(s, k1) for s in self.ids}
        maps = []
        for (src, tgt) in sorted(p2p, key=lambda p: (self.ids.index(p[1]), self.ids.index(p[0]))):
            if (tgt, src) not in p2p:
                raise MissingReverseMap(f"vertex map {src}->{tgt} has no reverse")
            p = p2p[(src, tgt)]
            p.validate(bases[src].n, bases[tgt].n)
            maps.append(fmap_from_p2p(p, bases[src], bases[tgt], k1))  # carries tgt -> src
        net = build_network(self.ids, maps)
        clb = compute_clb(net)
        p2p_path = os.path.join(d, "p2p.smat")
        write_smat(p2p_path, {_pair_name(s, t): p2p[(s, t)].assignment
                              for (s, t) in sorted(p2p, key=lambda p: (self.ids.index(p[0]), self.ids.index(p[1])))})
        maps_path = os.path.join(d, "maps.smat")
        write_smat(maps_path, {_pair_name(self.ids[i], self.ids[j]): c
                               for (i, j), c in sorted(net.maps.items())})
        clb_path = os.path.join(d, "clb.smat")
        entries = {f"Y/{s}": y for s, y in zip(self.ids, clb.y)}
        entries["eigenvalues"] = clb.eigenvalues
        write_smat(clb_path, entries)
        meta = os.path.join(d, "network.json")
        with open(meta, "w") as fh:
            json.dump({"k1": k1, "shape_ids": self.ids,
                       "edges": [[self.ids[i], self.ids[j]] for i, j in net.edges],
                       "residual": clb.residual}, fh, indent=2)
        return [p2p_path, maps_path, clb_path, meta]

    def _stage_cclb(self):
        d = self._dir("cclb")
        k1 = int(self.params["k1"])
        k2 = resolved_k2(self.params)
        data = read_smat(self.path("network", "clb.smat"))
        with open(self.path("network", "network.json")) as fh:
            net_meta = json.load(fh)
        clb = LatentBasisSet([data[f"Y/{s}"] for s in self.ids], net_meta["residual"],
                             data["eigenvalues"].ravel())
        evals = [self.basis(s, k1).evals for s in self.ids]
        cc = compute_cclb(clb, evals, k2, self.ids)
        path = os.path.join(d, "cclb.smat")
        entries = {f"Ytilde/{s}": y for s, y in zip(self.ids, cc.y_tilde)}
        entries.update({"U": cc.u, "E": cc.e_matrix, "Gamma": cc.gamma})
        write_smat(path, entries)
        meta = os.path.join(d, "cclb.json")
        with open(meta, "w") as fh:
            json.dump({"k1": k1, "k2": k2, "cclb_id": cc.cclb_id, "shape_ids": self.ids,
                       "edges": net_meta["edges"], "clb_residual": net_meta["residual"],
                       "e_normalization": "mean over shapes"}, fh, indent=2)
        return [path, meta]

    def _stage_encode(self):
        d = self._dir("encode")
        ae = self.autoencoder()

        def work(sid):
            z = ae.encode(sid)
            path = os.path.join(d, f"{sid}.smat")
            write_smat(path, {"z": z.z})
            side = os.path.join(d, f"{sid}.json")
            with open(side, "w") as fh:
                json.dump({"shape_id": sid, "cclb_id": z.cclb_id, "kind": z.kind,
                           "k2": z.k2, "F": z.feature_dim, "flatten_order": "k2-major"}, fh)
            return [path, side]

        return [p for ps in self._map(work, self.ids) for p in ps]

    def _stage_decode(self):
        d = self._dir("decode")
        ae = self.autoencoder()
        tmpl = self.templates_by_id()

        def work(sid):
            rec = ae.decode(self.code(sid), tmpl[sid])
            path = os.path.join(d, f"{sid}.off")
            write_off(rec, path)
            return path

        return self._map(work, self.ids)

    def _stage_interp(self):
        d = self._dir("interp")
        ae = self.autoencoder()
        tmpl = self.templates_by_id()
        cfg = self.params["interp"]
        pairs = cfg.get("pairs") or ([self.ids[:2]] if len(self.ids) >= 2 else [])
        ts = np.linspace(0.0, 1.0, int(cfg.get("steps", 5)))
        outputs = []
        for a, b in pairs:
            za, zb = self.code(a), self.code(b)
            for t in ts:
                z = interpolate(za, zb, float(t))
                stem = f"{_pair_name(a, b)}_t{t:.3f}"
                rec = ae.decode(z, tmpl[a])
                off = os.path.join(d, stem + ".off")
                write_off(rec, off)
                smat = os.path.join(d, stem + ".smat")
                write_smat(smat, {"z": z.z})
                outputs += [off, smat]
        return outputs

    def _stage_embed(self):
        d = self._dir("embed")
        codes = [self.code(s) for s in self.ids]
        tags = [self.shapes[s]["tag"] or self.shapes[s]["category"] for s in self.ids]
        table = pca_embed(codes, int(self.params["embed"]["dim"]), tags)
        path = os.path.join(d, "embedding.csv")
        write_embedding_csv(table, path)
        return [path]

    def evaluate(self):
        """Per-shape rows: reconstruction on the template vs. the input via template->input maps."""
        tmpl = self.templates_by_id()
        p2p = self.network_p2p()
        cfg = self.params["loss"]
        rows = []
        for sid in self.ids:
            t = tmpl[sid]
            rec = load_mesh(self.path("decode", f"{sid}.off"))
            src = self.mesh(sid)
            if t == sid:
                corr = PointToPointMap(np.arange(src.n_vertices), t, sid)
            elif (t, sid) in p2p:
                corr = p2p[(t, sid)]
            else:
                rows.append({"shape_id": sid, "template_id": t, "mse_x1e4": float("nan"),
                             "l1": float("nan"), "l2": float("nan"), "loss": float("nan")})
                continue
            l1 = p2p_loss(corr, src, rec)
            l2 = pairwise_distance_loss(src.vertices[corr.assignment], rec.vertices,
                                        cfg["max_points"], self.config["seed"])
            rows.append({"shape_id": sid, "template_id": t, "mse_x1e4": mse_eval(rec, src, corr),
                         "l1": l1, "l2": l2, "loss": combined_loss(l1, l2, cfg["lambda"])})
        return rows

    def _stage_eval(self):
        d = self._dir("eval")
        rows = self.evaluate()
        buf = io.StringIO()
        cols = ["shape_id", "template_id", "mse_x1e4", "l1", "l2", "loss"]
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join([r["shape_id"], r["template_id"]]
                               + [repr(float(r[c])) for c in cols[2:]]) + "\n")
        path = os.path.join(d, "mse.csv")
        with open(path + ".tmp", "w") as fh:
            fh.write(buf.getvalue())
        os.replace(path + ".tmp", path)
        self.eval_table = buf.getvalue()
        return [path]
