import csv
import io
import json
import subprocess
import sys

import pytest

from specpool.cli import main, write_synthetic_collection
from specpool.fmap import load_p2p_txt
from specpool.mesh import load_mesh
from specpool.network import compute_cclb, compute_clb, network_from_p2p
from specpool.pooling import LinearAutoencoder, mse_eval
from specpool.smat import read_smat
from specpool.spectral import eigenbasis


@pytest.fixture(scope="module")
def collection(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    write_synthetic_collection(d, subdivisions=2)
    return d


def _three_shape_manifest(collection, tmp_path):
    raw = json.loads((collection / "manifest.json").read_text())
    raw["shapes"] = raw["shapes"][:3]
    for s in raw["shapes"]:
        s["path"] = str(collection / s["path"])
    p = tmp_path / "m.json"
    p.write_text(json.dumps(raw))
    return p


def _run(manifest, out, stage, *extra):
    return main(["--manifest", str(manifest), "--stage", stage, "--out", str(out), *extra])


def _out_dir(out):
    (d,) = [p for p in out.iterdir() if p.is_dir()]
    return d


def test_laplacian_stage(collection, tmp_path):
    m = _three_shape_manifest(collection, tmp_path)
    assert _run(m, tmp_path / "out", "laplacian") == 0
    d = _out_dir(tmp_path / "out")
    smats = sorted(p.name for p in (d / "laplacian").glob("*.smat"))
    assert smats == ["blob0.smat", "blob1.smat", "blob2.smat"]
    b = read_smat(d / "laplacian" / "blob0.smat")
    assert set(b) == {"phi", "evals", "mass"}
    assert _run(m, tmp_path / "out", "laplacian") == 0
    assert json.loads((d / "stamps" / "laplacian.json").read_text())


def test_missing_prerequisite_exit_code(collection, tmp_path):
    m = _three_shape_manifest(collection, tmp_path)
    r = subprocess.run([sys.executable, "-m", "specpool", "--manifest", str(m), "--stage", "cclb",
                        "--out", str(tmp_path / "out")], capture_output=True, text=True)
    assert r.returncode == 2
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert err["code"] == "MissingPrerequisite" and err["stage"] == "cclb"


def test_bad_manifest(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert _run(p, tmp_path / "out", "laplacian") == 2
    assert json.loads(capsys.readouterr().err.strip())["code"] == "ManifestError"


def test_stale_prerequisite_detected(collection, tmp_path, capsys):
    m = _three_shape_manifest(collection, tmp_path)
    out = tmp_path / "out"
    assert _run(m, out, "laplacian") == 0
    assert _run(m, out, "descriptors") == 0
    # tamper with an upstream artifact
    f = _out_dir(out) / "laplacian" / "blob1.smat"
    f.write_bytes(f.read_bytes()[:-1] + b"\x01")
    capsys.readouterr()
    assert _run(m, out, "fmap") == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["code"] == "StalePrerequisite"


def test_overrides_recorded(collection, tmp_path):
    m = _three_shape_manifest(collection, tmp_path)
    assert _run(m, tmp_path / "out", "laplacian", "--set", "k1=60", "--set", "zoomout.k_end=60") == 0
    cfg = json.loads((_out_dir(tmp_path / "out") / "resolved_config.json").read_text())
    assert cfg["params"]["k1"] == 60 and cfg["params"]["zoomout"]["k_end"] == 60


def test_supervised_run_matches_library(collection, tmp_path, capsys):
    manifest = collection / "manifest_supervised.json"
    out = tmp_path / "out"
    assert _run(manifest, out, "all", "--jobs", "2") == 0
    table = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    d = _out_dir(out)
    for st in ("fmap", "zoomout"):
        assert [f.name for f in (d / st).iterdir()] == ["bypassed.json"]

    raw = json.loads(manifest.read_text())
    ids = [s["id"] for s in raw["shapes"]]
    meshes = [load_mesh(d / "laplacian" / f"{s}.off") for s in ids]
    bases = [eigenbasis(mm, 120) for mm in meshes]
    gt = {(g["source"], g["target"]): load_p2p_txt(collection / g["path"], g["source"], g["target"])
          for g in raw["ground_truth"]}
    clb = compute_clb(network_from_p2p(ids, bases, gt, 120))
    cc = compute_cclb(clb, [b.evals for b in bases], 32, ids)
    ae = LinearAutoencoder(dict(zip(ids, meshes)), dict(zip(ids, bases)), cc)
    rows = {r["shape_id"]: r for r in table}
    assert set(rows) == set(ids)
    for s in ids:
        rec = ae.decode(ae.encode(s), "blob0")
        corr = None if s == "blob0" else gt[("blob0", s)]
        assert float(rows[s]["mse_x1e4"]) == pytest.approx(mse_eval(rec, ae.meshes[s], corr), rel=1e-6)
    # the re-indexed copy reconstructs exactly like its original
    assert float(rows["blob1_perm"]["mse_x1e4"]) == pytest.approx(float(rows["blob1"]["mse_x1e4"]), rel=1e-6)
    emb = (d / "embed" / "embedding.csv").read_text().splitlines()
    assert len(emb) == 2 + len(ids)
    assert list((d / "interp").glob("*.off"))


def test_unsupervised_stage_rerun_is_noop(collection, tmp_path, capsys):
    out = tmp_path / "out"
    m = collection / "manifest.json"
    assert _run(m, out, "all", "--set", "k1=60", "--set", "zoomout.k_end=60", "--set", "k2=16") == 0
    capsys.readouterr()
    assert _run(m, out, "eval", "--set", "k1=60", "--set", "zoomout.k_end=60", "--set", "k2=16") == 0
    assert "up-to-date" in capsys.readouterr().err
