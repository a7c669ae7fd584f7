"""Embedded HTTP service backing the point-count annotation workflow.

The service owns one scan and one annotation file.  Every accepted label
write is persisted before the request is acknowledged: the annotation
file is rewritten to a temporary file, fsynced, and atomically renamed
over the old one, so a crash never loses an acknowledged label.  A
cross-process lock on a sidecar ``.lock`` file (auto-released if the
process dies) prevents two services from writing the same annotation.

Endpoints (JSON unless noted), all under ``/api``:

    GET  /api/session                 session metadata and progress
    GET  /api/tile?cx=&cy=&half=&zoom=  lossless PNG crop, black beyond edges
    GET  /api/annotations             full ordered entry list
    PUT  /api/annotations/{index}     body {"label": "AGG"|"PASTE"|"VOID"}
    POST /api/undo                    revert the last labeled point

If a static directory is configured, anything outside ``/api`` is served
from it (the browser annotation UI).
"""

from __future__ import annotations

import fcntl
import io
import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from .c457 import GridSpec, make_grid
from .errors import InputError
from .raster import LABEL_NAMES, NAME_TO_LABEL, PhaseLabel, Scan
from .scoring import GridAnnotation, annotation_to_text, load_annotation, new_annotation


class AnnotationStore:
    """Serialized, durably persisted label store for one annotation file."""

    def __init__(self, path, scan_id: str, grid: GridSpec):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._undo: list[tuple[int, int]] = []  # (index, previous label code)
        self._lock_path = self.path.with_suffix(self.path.suffix + ".lock")
        self._lock_fd = os.open(self._lock_path, os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(self._lock_fd)
            raise InputError(f"annotation file {self.path} is locked by another process")
        if self.path.exists():
            ann = load_annotation(self.path)
            if (ann.grid.rows, ann.grid.cols) != (grid.rows, grid.cols):
                raise InputError(
                    f"{self.path}: existing annotation grid {ann.grid.rows}x{ann.grid.cols} "
                    f"does not match requested {grid.rows}x{grid.cols}"
                )
            if not (np.array_equal(ann.grid.xs, grid.xs) and np.array_equal(ann.grid.ys, grid.ys)):
                raise InputError(f"{self.path}: existing annotation grid coordinates do not match the scan")
            self.annotation = GridAnnotation(scan_id=scan_id, grid=grid, labels=ann.labels)
        else:
            self.annotation = new_annotation(scan_id, grid)
            self._persist()

    def close(self) -> None:
        os.close(self._lock_fd)

    def _persist(self) -> None:
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(annotation_to_text(self.annotation))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.path)
        dir_fd = os.open(self.path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    def set_label(self, index: int, label: PhaseLabel):
        with self._lock:
            previous = int(self.annotation.labels[index])
            self.annotation = self.annotation.with_label(index, label)
            self._persist()
            self._undo.append((index, previous))
            return self.progress()

    def undo(self):
        with self._lock:
            if not self._undo:
                return None
            index, previous = self._undo.pop()
            self.annotation = self.annotation.with_label(index, PhaseLabel(previous))
            self._persist()
            return index, self.progress()

    def progress(self) -> tuple[int, int | None]:
        ann = self.annotation
        missing = ann.missing_indices()
        next_index = int(missing[0]) if missing.size else None
        return ann.labeled_count, next_index


class AnnotationService:
    def __init__(self, scan: Scan, annotation_path, grid_rows: int, grid_cols: int, port: int = 0, static_dir=None):
        self.scan = scan
        self.grid = make_grid(scan.width, scan.height, grid_rows, grid_cols)
        self.store = AnnotationStore(annotation_path, scan.id, self.grid)
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        handler = _make_handler(self)
        try:
            self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        except OSError as exc:
            self.store.close()
            raise InputError(f"cannot bind port {port}: {exc}")
        self._thread = None
        self._closed = False

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.close()

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join(timeout=5)
            self._thread = None
        self.httpd.server_close()
        self.store.close()

    # request payload helpers

    def session_json(self) -> dict:
        labeled, next_index = self.store.progress()
        return {
            "scan_id": self.scan.id,
            "width": self.scan.width,
            "height": self.scan.height,
            "pitch_um": self.scan.pitch_um,
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols},
            "labeled": labeled,
            "total": self.grid.total,
            "next_index": next_index,
        }

    def annotations_json(self) -> dict:
        ann = self.store.annotation
        entries = [
            {"index": k, "row": i, "col": j, "x": x, "y": y, "label": LABEL_NAMES[PhaseLabel(ann.labels[k])]}
            for k, (i, j, x, y) in enumerate(ann.grid.points())
        ]
        return {"scan_id": ann.scan_id, "entries": entries}

    def tile_png(self, cx: int, cy: int, half: int, zoom: int) -> bytes:
        """Lossless crop centered at (cx, cy); pixels beyond the scan are black,
        so the center of the patch is always the requested pixel."""
        if half < 1 or half > 2048 or zoom < 1 or zoom > 16:
            raise ValueError("half must be 1..2048 and zoom 1..16")
        size = 2 * half
        patch = np.zeros((size, size, 3), dtype=np.uint8)
        x0, y0 = cx - half, cy - half
        sx0, sy0 = max(0, x0), max(0, y0)
        sx1, sy1 = min(self.scan.width, x0 + size), min(self.scan.height, y0 + size)
        if sx1 > sx0 and sy1 > sy0:
            patch[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = self.scan.pixels[sy0:sy1, sx0:sx1]
        if zoom > 1:
            patch = patch.repeat(zoom, axis=0).repeat(zoom, axis=1)
        buf = io.BytesIO()
        Image.fromarray(patch).save(buf, format="PNG")
        return buf.getvalue()


def _make_handler(service: AnnotationService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: bytes, content_type: str = "application/json") -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, status: int, payload: dict) -> None:
            self._send(status, json.dumps(payload).encode("utf-8"))

        def _error(self, status: int, message: str) -> None:
            self._json(status, {"error": message})

        def do_GET(self):
            url = urlparse(self.path)
            try:
                if url.path == "/api/session":
                    self._json(200, service.session_json())
                elif url.path == "/api/annotations":
                    self._json(200, service.annotations_json())
                elif url.path == "/api/tile":
                    params = parse_qs(url.query)
                    try:
                        cx = int(params["cx"][0])
                        cy = int(params["cy"][0])
                        half = int(params.get("half", ["250"])[0])
                        zoom = int(params.get("zoom", ["1"])[0])
                    except (KeyError, ValueError):
                        return self._error(400, "tile needs integer cx, cy and optional half, zoom")
                    self._send(200, service.tile_png(cx, cy, half, zoom), "image/png")
                elif url.path.startswith("/api/"):
                    self._error(404, f"unknown endpoint {url.path}")
                else:
                    self._static(url.path)
            except ValueError as exc:
                self._error(400, str(exc))

        def do_PUT(self):
            url = urlparse(self.path)
            prefix = "/api/annotations/"
            if not url.path.startswith(prefix):
                return self._error(404, f"unknown endpoint {url.path}")
            try:
                index = int(url.path[len(prefix) :])
            except ValueError:
                return self._error(400, "annotation index must be an integer")
            if not 0 <= index < service.grid.total:
                return self._error(404, f"index {index} out of range 0..{service.grid.total - 1}")
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                name = body["label"]
            except (ValueError, KeyError):
                return self._error(400, 'body must be JSON {"label": "AGG"|"PASTE"|"VOID"}')
            label = NAME_TO_LABEL.get(name)
            if label is None or label == PhaseLabel.UNLABELED:
                return self._error(400, f"label must be AGG, PASTE or VOID, got {name!r}")
            labeled, next_index = service.store.set_label(index, label)
            self._json(200, {"ok": True, "labeled": labeled, "next_index": next_index})

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/api/undo":
                return self._error(404, f"unknown endpoint {url.path}")
            result = service.store.undo()
            if result is None:
                return self._error(409, "nothing to undo")
            index, (labeled, next_index) = result
            self._json(200, {"ok": True, "index": index, "labeled": labeled, "next_index": next_index})

        def _static(self, path: str) -> None:
            if service.static_dir is None:
                return self._error(404, "no static content configured")
            rel = path.lstrip("/") or "index.html"
            target = (service.static_dir / rel).resolve()
            if not str(target).startswith(str(service.static_dir)) or not target.is_file():
                return self._error(404, f"no such file {path}")
            content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), content_type)

    return Handler
