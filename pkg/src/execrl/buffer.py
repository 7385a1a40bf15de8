"""Bounded concurrent sample store with FIFO eviction, plus a line-protocol
TCP server so remote producers can feed it.

Producers push freshly graded entries; the trainer samples uniformly
without removing anything; when capacity is exceeded the oldest entries
(lowest sequence numbers) are evicted atomically with the triggering push.
Sequence numbers are assigned under the buffer lock, so acknowledged seqs
are unique and gap-free.

Wire protocol (one JSON object per LF-terminated line, UTF-8):
    -> {"op": "push", "entry": <wire record>}        <- {"ok": true, "seq": n}
    -> {"op": "sample", "batch_size": k, "seed": s}  <- {"ok": true, "entries": [...]}
    -> {"op": "stats"}                               <- {"ok": true, "size": ..., ...}
A malformed line gets {"ok": false, "error": ...} and the connection keeps
serving subsequent lines.
"""

from __future__ import annotations

import json
import random
import socket
import socketserver
import threading
import time
from pathlib import Path

from . import serde
from .errors import EmptyBuffer, MalformedRecord, ValidationFailed
from .model import BufferEntry, validate_entry


class OnlineBuffer:
    def __init__(
        self,
        capacity: int = 6400,
        spill_path: str | Path | None = None,
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[BufferEntry] = []  # ascending created_seq
        self._lock = threading.Lock()
        self._next_seq = 1
        self._spill_path = Path(spill_path) if spill_path else None
        self._spill_fh = None
        if self._spill_path is not None:
            self._replay_spill()
            self._spill_fh = open(self._spill_path, "a", encoding="utf-8")

    # -- core operations ----------------------------------------------------

    def push(self, entry: BufferEntry) -> int:
        """Insert, assign the next sequence number, evict the oldest at
        capacity. Returns the assigned seq."""
        violations = validate_entry(entry)
        if violations:
            raise ValidationFailed("; ".join(violations))
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            stamped = BufferEntry(
                problem_id=entry.problem_id,
                candidate=entry.candidate,
                feedback=entry.feedback,
                rewards=entry.rewards,
                created_seq=seq,
                created_at=entry.created_at or time.time(),
            )
            self._entries.append(stamped)
            if len(self._entries) > self.capacity:
                del self._entries[: len(self._entries) - self.capacity]
            if self._spill_fh is not None:
                self._spill_fh.write(serde.encode_line(serde.entry_to_wire(stamped)))
                self._spill_fh.flush()
        return seq

    def sample(self, batch_size: int, rng_seed: int) -> list[BufferEntry]:
        """Uniform without-replacement sample of min(batch_size, size)
        entries; nothing is removed; deterministic for a fixed seed and
        buffer state."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        with self._lock:
            snapshot = list(self._entries)
        if not snapshot:
            raise EmptyBuffer("cannot sample from an empty buffer")
        count = min(batch_size, len(snapshot))
        return random.Random(rng_seed).sample(snapshot, count)

    @property
    def size(self) -> int:
        with self._lock:
            return len(self._entries)

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._next_seq - 1

    def snapshot(self) -> list[BufferEntry]:
        with self._lock:
            return list(self._entries)

    def close(self) -> None:
        if self._spill_fh is not None:
            self._spill_fh.close()
            self._spill_fh = None

    # -- crash recovery -----------------------------------------------------

    def _replay_spill(self) -> None:
        if not self._spill_path.exists():
            return
        entries: list[BufferEntry] = []
        with open(self._spill_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entries.append(serde.entry_from_wire(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError):
                    continue  # torn tail write from a crash
        entries.sort(key=lambda e: e.created_seq)
        self._entries = entries[-self.capacity:]
        if entries:
            self._next_seq = entries[-1].created_seq + 1


# ---------------------------------------------------------------------------
# TCP transport
# ---------------------------------------------------------------------------


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        buffer: OnlineBuffer = self.server.buffer  # type: ignore[attr-defined]
        log = self.server.log  # type: ignore[attr-defined]
        for raw in self.rfile:
            try:
                response = self._process(buffer, raw)
            except Exception as exc:  # never drop the connection on bad input
                response = {"ok": False, "error": f"internal: {exc}"}
            if log is not None:
                log(response)
            self.wfile.write(serde.encode_line(response).encode("utf-8"))
            self.wfile.flush()

    def _process(self, buffer: OnlineBuffer, raw: bytes) -> dict:
        try:
            message = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return {"ok": False, "error": f"parse: {exc}"}
        op = message.get("op")
        if op == "push":
            try:
                entry = serde.entry_from_wire(message.get("entry") or {})
            except (KeyError, TypeError, ValueError) as exc:
                return {"ok": False, "error": f"parse: {exc}"}
            try:
                seq = buffer.push(entry)
            except ValidationFailed as exc:
                return {"ok": False, "error": f"validation: {exc}"}
            return {"ok": True, "seq": seq}
        if op == "sample":
            try:
                entries = buffer.sample(
                    int(message.get("batch_size", 1)),
                    int(message.get("seed", 0)),
                )
            except EmptyBuffer as exc:
                return {"ok": False, "error": f"empty: {exc}"}
            return {"ok": True, "entries": [serde.entry_to_wire(e) for e in entries]}
        if op == "stats":
            return {
                "ok": True,
                "size": buffer.size,
                "capacity": buffer.capacity,
                "last_seq": buffer.last_seq,
            }
        return {"ok": False, "error": f"unknown op: {op!r}"}


class BufferServer:
    """Threaded TCP front end over an OnlineBuffer."""

    def __init__(
        self,
        buffer: OnlineBuffer,
        host: str = "127.0.0.1",
        port: int = 0,
        log=None,
    ) -> None:
        self.buffer = buffer

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _Handler)
        self._server.buffer = buffer  # type: ignore[attr-defined]
        self._server.log = log  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class BufferClient:
    """Blocking line-protocol client for producers and samplers."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def _roundtrip(self, message: dict) -> dict:
        self._file.write(serde.encode_line(message).encode("utf-8"))
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ConnectionError("buffer server closed the connection")
        return json.loads(line.decode("utf-8"))

    def push(self, entry: BufferEntry) -> int:
        response = self._roundtrip(
            {"op": "push", "entry": serde.entry_to_wire(entry, include_seq=False)}
        )
        if not response.get("ok"):
            raise MalformedRecord(response.get("error", "push rejected"))
        return int(response["seq"])

    def push_raw(self, line: str) -> dict:
        """Send one raw request line verbatim; returns the raw response."""
        self._file.write(line.encode("utf-8"))
        if not line.endswith("\n"):
            self._file.write(b"\n")
        self._file.flush()
        reply = self._file.readline()
        if not reply:
            raise ConnectionError("buffer server closed the connection")
        return json.loads(reply.decode("utf-8"))

    def sample(self, batch_size: int, seed: int) -> list[BufferEntry]:
        response = self._roundtrip(
            {"op": "sample", "batch_size": batch_size, "seed": seed}
        )
        if not response.get("ok"):
            raise EmptyBuffer(response.get("error", "sample rejected"))
        return [serde.entry_from_wire(rec) for rec in response["entries"]]

    def stats(self) -> dict:
        return self._roundtrip({"op": "stats"})

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()
