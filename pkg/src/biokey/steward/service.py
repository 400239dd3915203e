"""Share custody service.

Routes::

    PUT    /v1/shares/{rid}/{x}   store an envelope (201 new, 200 identical re-put, 409 conflict)
    GET    /v1/shares/{rid}/{x}   stored envelope bytes, or 404
    DELETE /v1/shares/{rid}/{x}   204, or 404
    GET    /v1/shares/{rid}       {"rid": ..., "indices": [...]}

Each share lives in ``data_dir/rid/x.json`` and is written via a temp file,
fsync and rename, so readers never see a partial envelope.
"""
from __future__ import annotations

import datetime as _dt
import hmac
import json
import logging
import os
import re
import tempfile
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..errors import BiokeyError
from ..sss import Share

logger = logging.getLogger(__name__)

MAX_BODY = 1 << 20
TOKEN_ENV = "BIOKEY_STEWARD_TOKEN"

_RID = re.compile(r"^[0-9a-f]{32}$")
_ROUTE = re.compile(r"^/v1/shares/([^/]+)(?:/([^/]+))?/?$")


class ShareStore:
    def __init__(self, data_dir: str | os.PathLike):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[tuple[str, int], threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, rid: str, x: int) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault((rid, x), threading.Lock())

    def path(self, rid: str, x: int) -> Path:
        return self.root / rid / f"{x}.json"

    def put(self, rid: str, x: int, body: bytes) -> tuple[HTTPStatus, str]:
        with self._lock(rid, x):
            target = self.path(rid, x)
            if target.exists():
                if target.read_bytes() == body:
                    return HTTPStatus.OK, _mtime(target)
                return HTTPStatus.CONFLICT, _mtime(target)
            target.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(target, body)
            return HTTPStatus.CREATED, _mtime(target)

    def get(self, rid: str, x: int) -> bytes | None:
        try:
            return self.path(rid, x).read_bytes()
        except FileNotFoundError:
            return None

    def delete(self, rid: str, x: int) -> bool:
        with self._lock(rid, x):
            try:
                self.path(rid, x).unlink()
            except FileNotFoundError:
                return False
            return True

    def indices(self, rid: str) -> list[int]:
        d = self.root / rid
        if not d.is_dir():
            return []
        return sorted(int(p.stem) for p in d.glob("*.json") if p.stem.isdigit())


def _mtime(p: Path) -> str:
    ts = p.stat().st_mtime
    return _dt.datetime.fromtimestamp(ts, _dt.timezone.utc).isoformat()


def _atomic_write(target: Path, body: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    dir_fd = os.open(target.parent, os.O_RDONLY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


class _Handler(BaseHTTPRequestHandler):
    server: "StewardServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes = b"", ctype: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _json(self, status: int, obj: dict) -> None:
        self._send(status, json.dumps(obj).encode())

    def _error(self, status: int, code: str, detail: str = "") -> None:
        self._json(status, {"error": code, "detail": detail})

    def _authorized(self) -> bool:
        token = self.server.token
        if not token:
            return True
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer ") and hmac.compare_digest(header[7:].encode(), token.encode()):
            return True
        self._error(HTTPStatus.UNAUTHORIZED, "unauthorized")
        return False

    def _route(self) -> tuple[str, int | None] | None:
        m = _ROUTE.match(self.path.split("?", 1)[0])
        if not m or not _RID.match(m.group(1)):
            self._error(HTTPStatus.NOT_FOUND, "not-found")
            return None
        x = m.group(2)
        if x is None:
            return m.group(1), None
        if not x.isdigit() or not 1 <= int(x) <= 255:
            self._error(HTTPStatus.NOT_FOUND, "not-found")
            return None
        return m.group(1), int(x)

    def do_PUT(self):
        route = self._route()
        if route is None or not self._authorized():
            return
        rid, x = route
        if x is None:
            self._error(HTTPStatus.METHOD_NOT_ALLOWED, "method-not-allowed")
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._error(HTTPStatus.LENGTH_REQUIRED, "length-required")
            return
        if length > MAX_BODY:
            self.close_connection = True
            self._error(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, "too-large")
            return
        body = self.rfile.read(length)
        try:
            share = Share.from_json(body)
        except BiokeyError as exc:
            self._error(HTTPStatus.BAD_REQUEST, exc.code, exc.detail)
            return
        if not share.valid:
            self._error(HTTPStatus.BAD_REQUEST, "corrupt-share", f"checksum mismatch for x={share.x}")
            return
        if share.rid.hex() != rid or share.x != x:
            self._error(HTTPStatus.BAD_REQUEST, "path-mismatch", "envelope rid/x differ from URL")
            return
        status, stored_at = self.server.store.put(rid, x, body)
        if status == HTTPStatus.CONFLICT:
            self._error(status, "conflict", f"a different share is stored at {rid}/{x}")
            return
        self._json(status, {"rid": rid, "x": x, "stored_at": stored_at})

    def do_GET(self):
        route = self._route()
        if route is None or not self._authorized():
            return
        rid, x = route
        if x is None:
            self._json(HTTPStatus.OK, {"rid": rid, "indices": self.server.store.indices(rid)})
            return
        body = self.server.store.get(rid, x)
        if body is None:
            self._error(HTTPStatus.NOT_FOUND, "not-found")
        else:
            self._send(HTTPStatus.OK, body)

    def do_DELETE(self):
        route = self._route()
        if route is None or not self._authorized():
            return
        rid, x = route
        if x is None:
            self._error(HTTPStatus.METHOD_NOT_ALLOWED, "method-not-allowed")
        elif self.server.store.delete(rid, x):
            self._send(HTTPStatus.NO_CONTENT)
        else:
            self._error(HTTPStatus.NOT_FOUND, "not-found")


class StewardServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], data_dir: str | os.PathLike, token: str | None = None):
        self.store = ShareStore(data_dir)
        self.token = token if token is not None else os.environ.get(TOKEN_ENV) or None
        super().__init__(addr, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


class BackgroundSteward:
    """Run a :class:`StewardServer` on a daemon thread (tests, demos)."""

    def __init__(self, data_dir, host: str = "127.0.0.1", port: int = 0, token: str | None = None):
        self.data_dir = data_dir
        self.host, self.port, self.token = host, port, token
        self.server: StewardServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> "BackgroundSteward":
        self.server = StewardServer((self.host, self.port), self.data_dir, self.token)
        self.port = self.server.server_address[1]  # keep the port across restarts
        self._thread = threading.Thread(target=self.server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self.server is not None:
            self.server.shutdown()
            self.server.server_close()
            self._thread.join()
            self.server = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(host: str, port: int, data_dir: str | os.PathLike, token: str | None = None) -> None:
    server = StewardServer((host, port), data_dir, token)
    logger.info("steward listening on %s, data in %s", server.url, data_dir)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
