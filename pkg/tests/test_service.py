import io
import json
import os
import signal
import subprocess
import sys
import urllib.error
import urllib.request

import numpy as np
import pytest
from PIL import Image

from petroseg.errors import InputError
from petroseg.phantom import generate_phantom
from petroseg.scoring import load_annotation
from petroseg.service import AnnotationService


@pytest.fixture(scope="module")
def scan():
    return generate_phantom(
        80, 80, seed=21, plant_probes=False, void_radius=(3, 8), aggregate_radius=(5, 14), scan_id="svc"
    ).scan


@pytest.fixture()
def service(scan, tmp_path):
    svc = AnnotationService(scan, tmp_path / "svc.tsv", grid_rows=4, grid_cols=4, port=0)
    svc.start_background()
    yield svc
    svc.close()


def api(svc, path, method="GET", body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(f"http://127.0.0.1:{svc.port}{path}", data=data, method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req, timeout=10) as resp:
        payload = resp.read()
        return resp.status, json.loads(payload) if resp.headers.get_content_type() == "application/json" else payload


def test_fresh_session(service, scan):
    status, session = api(service, "/api/session")
    assert status == 200
    assert session == {
        "scan_id": "svc",
        "width": 80,
        "height": 80,
        "pitch_um": scan.pitch_um,
        "grid": {"rows": 4, "cols": 4},
        "labeled": 0,
        "total": 16,
        "next_index": 0,
    }


def test_label_persists_before_ack(service, tmp_path):
    status, reply = api(service, "/api/annotations/0", "PUT", {"label": "VOID"})
    assert status == 200 and reply["ok"] and reply["labeled"] == 1 and reply["next_index"] == 1
    ann = load_annotation(tmp_path / "svc.tsv")
    assert ann.labels[0] == 2


def test_annotations_listing(service):
    api(service, "/api/annotations/3", "PUT", {"label": "PASTE"})
    _, listing = api(service, "/api/annotations")
    assert listing["scan_id"] == "svc"
    assert len(listing["entries"]) == 16
    assert listing["entries"][3]["label"] == "PASTE"
    assert listing["entries"][0]["label"] == "UNLABELED"


def test_undo_reverts_last_label(service, tmp_path):
    api(service, "/api/annotations/5", "PUT", {"label": "AGG"})
    api(service, "/api/annotations/6", "PUT", {"label": "VOID"})
    status, reply = api(service, "/api/undo", "POST")
    assert status == 200 and reply["index"] == 6
    ann = load_annotation(tmp_path / "svc.tsv")
    assert ann.labels[6] == 255 and ann.labels[5] == 0


def test_undo_empty_is_409(service):
    with pytest.raises(urllib.error.HTTPError) as err:
        api(service, "/api/undo", "POST")
    assert err.value.code == 409


def test_bad_label_rejected(service):
    with pytest.raises(urllib.error.HTTPError) as err:
        api(service, "/api/annotations/0", "PUT", {"label": "UNLABELED"})
    assert err.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as err:
        api(service, "/api/annotations/99", "PUT", {"label": "AGG"})
    assert err.value.code == 404


def test_completion_flips_next_index_to_null(service):
    for k in range(16):
        api(service, f"/api/annotations/{k}", "PUT", {"label": "PASTE"})
    _, session = api(service, "/api/session")
    assert session["labeled"] == 16 and session["next_index"] is None


def test_tile_endpoint_matches_crop(service, scan):
    _, png = api(service, "/api/tile?cx=10&cy=12&half=8&zoom=2")
    tile = np.asarray(Image.open(io.BytesIO(png)))
    assert tile.shape == (32, 32, 3)
    direct = np.zeros((16, 16, 3), dtype=np.uint8)
    direct[:, :] = scan.pixels[4:20, 2:18]
    assert np.array_equal(tile, direct.repeat(2, axis=0).repeat(2, axis=1))


def test_tile_pads_black_past_borders(service):
    _, png = api(service, "/api/tile?cx=0&cy=0&half=4&zoom=1")
    tile = np.asarray(Image.open(io.BytesIO(png)))
    assert tile.shape == (8, 8, 3)
    assert (tile[:4, :4] == 0).all()  # beyond the top-left corner


def test_concurrent_writer_lock(service, scan, tmp_path):
    with pytest.raises(InputError, match="locked"):
        AnnotationService(scan, tmp_path / "svc.tsv", grid_rows=4, grid_cols=4, port=0)


def test_grid_mismatch_rejected(scan, tmp_path):
    svc = AnnotationService(scan, tmp_path / "a.tsv", grid_rows=4, grid_cols=4, port=0)
    svc.close()
    with pytest.raises(InputError, match="does not match"):
        AnnotationService(scan, tmp_path / "a.tsv", grid_rows=5, grid_cols=5, port=0)


def serve_subprocess(scan_path, ann_path, extra_env=None):
    env = dict(os.environ, **(extra_env or {}))
    proc = subprocess.Popen(
        [sys.executable, "-m", "petroseg", "serve", str(scan_path), str(ann_path), "--port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        env=env,
    )
    line = proc.stdout.readline().strip()
    assert line.startswith("LISTENING "), f"unexpected service output: {line!r}"
    return proc, int(line.split()[1])


def put_label(port, index, label):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}/api/annotations/{index}",
        data=json.dumps({"label": label}).encode(),
        method="PUT",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read())


def test_kill_and_restart_loses_no_acknowledged_labels(tmp_path, scan):
    scan_path = tmp_path / "svc.png"
    Image.fromarray(np.asarray(scan.pixels)).save(scan_path)
    ann_path = tmp_path / "svc.tsv"
    conf = tmp_path / "svc.conf"
    conf.write_text("grid.rows = 5\ngrid.cols = 5\n")

    proc = subprocess.Popen(
        [sys.executable, "-m", "petroseg", "--config", str(conf), "serve", str(scan_path), str(ann_path), "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        line = proc.stdout.readline().strip()
        port = int(line.split()[1])
        sequence = ["AGG", "PASTE", "VOID", "PASTE", "AGG", "VOID", "PASTE"]
        for k, label in enumerate(sequence):
            reply = put_label(port, k, label)
            assert reply["ok"]
        os.kill(proc.pid, signal.SIGKILL)  # no chance to flush anything
        proc.wait(timeout=10)
    finally:
        if proc.poll() is None:
            proc.kill()

    ann = load_annotation(ann_path)
    assert ann.labeled_count == len(sequence)
    assert [int(v) for v in ann.labels[: len(sequence)]] == [0, 1, 2, 1, 0, 2, 1]

    # restart resumes exactly where the acknowledged writes left off
    proc = subprocess.Popen(
        [sys.executable, "-m", "petroseg", "--config", str(conf), "serve", str(scan_path), str(ann_path), "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        port = int(proc.stdout.readline().strip().split()[1])
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/session", timeout=10) as resp:
            session = json.loads(resp.read())
        assert session["labeled"] == len(sequence)
        assert session["next_index"] == len(sequence)
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_static_ui_serving(scan, tmp_path):
    static = tmp_path / "ui"
    (static / "dist").mkdir(parents=True)
    (static / "index.html").write_text("<html><body>annotator</body></html>")
    (static / "dist" / "main.js").write_text("console.log('ok');")
    svc = AnnotationService(scan, tmp_path / "ui.tsv", grid_rows=3, grid_cols=3, port=0, static_dir=static)
    svc.start_background()
    try:
        status, body = api(svc, "/")
        assert status == 200 and b"annotator" in body
        status, body = api(svc, "/dist/main.js")
        assert status == 200 and b"console" in body
        with pytest.raises(urllib.error.HTTPError) as err:
            api(svc, "/../secret")
        assert err.value.code == 404
    finally:
        svc.close()
