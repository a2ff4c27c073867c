"""Minimal HTTP/2 framing layer (RFC 9113) over blocking sockets.

Covers what a cleartext prior-knowledge gRPC endpoint needs: the
client/server prefaces, HEADERS (+CONTINUATION) with HPACK, DATA with both
flow-control windows, SETTINGS, PING, WINDOW_UPDATE, RST_STREAM and GOAWAY.
One reader thread per connection; writes are serialized by a lock and batch
whole messages into single sendall calls.
"""

from __future__ import annotations

import logging
import select
import socket
import struct
import threading

from .hpackc import Decoder as HpackDecoder
from .hpackc import Encoder as HpackEncoder
from .hpackc import HpackError

log = logging.getLogger(__name__)

PREFACE = b"PRI * HTTP/2.0\r\n\r\nSM\r\n\r\n"

DATA = 0x0
HEADERS = 0x1
PRIORITY = 0x2
RST_STREAM = 0x3
SETTINGS = 0x4
PUSH_PROMISE = 0x5
PING = 0x6
GOAWAY = 0x7
WINDOW_UPDATE = 0x8
CONTINUATION = 0x9

FLAG_END_STREAM = 0x1
FLAG_ACK = 0x1
FLAG_END_HEADERS = 0x4
FLAG_PADDED = 0x8
FLAG_PRIORITY = 0x20

SETTINGS_HEADER_TABLE_SIZE = 0x1
SETTINGS_ENABLE_PUSH = 0x2
SETTINGS_MAX_CONCURRENT_STREAMS = 0x3
SETTINGS_INITIAL_WINDOW_SIZE = 0x4
SETTINGS_MAX_FRAME_SIZE = 0x5

DEFAULT_WINDOW = 65535
# Generous receive windows: we credit consumed bytes back eagerly, so senders
# never stall on us.
RECV_WINDOW = 1 << 22
RECV_CREDIT_THRESHOLD = 1 << 20

ERR_NO_ERROR = 0x0
ERR_PROTOCOL = 0x1
ERR_FLOW_CONTROL = 0x3
ERR_CANCEL = 0x8


class ConnectionClosed(Exception):
    pass


class H2Stream:
    """Receive-side state for one stream plus its send-window bookkeeping.

    `ended` records the peer's half-close (normal for unary requests);
    `reset_code` records abnormal termination.  on_cancel callbacks fire only
    for the latter.
    """

    __slots__ = (
        "stream_id", "cond", "headers", "trailers", "buffer", "ended",
        "reset_code", "send_window", "consumed_unreported", "on_cancel",
        "dispatched",
    )

    def __init__(self, stream_id: int, initial_send_window: int):
        self.stream_id = stream_id
        self.cond = threading.Condition()
        self.headers: list[tuple[bytes, bytes]] | None = None
        self.trailers: list[tuple[bytes, bytes]] | None = None
        self.buffer = bytearray()
        self.ended = False
        self.reset_code: int | None = None
        self.send_window = initial_send_window
        self.consumed_unreported = 0
        self.on_cancel: list = []
        self.dispatched = False

    def cancel_event(self) -> None:
        for cb in self.on_cancel:
            try:
                cb()
            except Exception:  # noqa: BLE001 - callbacks must not kill the reader
                log.exception("stream cancel callback failed")
        self.on_cancel.clear()


class H2Connection:
    """One HTTP/2 connection; thread-safe writes, single reader thread."""

    def __init__(self, sock: socket.socket, client_side: bool):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._rbuf = bytearray()
        self.client_side = client_side
        self._write_lock = threading.Lock()
        self._hpack_in = HpackDecoder()
        self._hpack_out = HpackEncoder()
        self._streams: dict[int, H2Stream] = {}
        self._streams_lock = threading.Lock()
        self._next_stream_id = 1 if client_side else 2
        self._window_cond = threading.Condition()
        self._conn_send_window = DEFAULT_WINDOW
        self._peer_initial_window = DEFAULT_WINDOW
        self._peer_max_frame = 16384
        self._conn_consumed = 0
        self.closed = False
        self.close_reason: str | None = None
        self.on_request = None  # server hook: fn(stream), fired at request END_STREAM
        self._reader: threading.Thread | None = None

    # -- handshake ---------------------------------------------------------

    def _settings_payload(self) -> bytes:
        return struct.pack(
            "!HIHIHI",
            SETTINGS_INITIAL_WINDOW_SIZE, RECV_WINDOW,
            SETTINGS_MAX_CONCURRENT_STREAMS, 1 << 20,
            SETTINGS_MAX_FRAME_SIZE, 1 << 20,
        )

    def start(self, reader_thread: bool = True) -> H2Connection:
        """Handshake; with reader_thread=False the owner must drive pump_once()."""
        if self.client_side:
            with self._write_lock:
                self._sock.sendall(
                    PREFACE
                    + self._frame_bytes(SETTINGS, 0, 0, self._settings_payload())
                    + self._frame_bytes(WINDOW_UPDATE, 0, 0,
                                        struct.pack("!I", RECV_WINDOW - DEFAULT_WINDOW))
                )
        else:
            preface = self._read_exact(len(PREFACE))
            if preface != PREFACE:
                raise ConnectionClosed("bad HTTP/2 preface")
            with self._write_lock:
                self._sock.sendall(
                    self._frame_bytes(SETTINGS, 0, 0, self._settings_payload())
                    + self._frame_bytes(WINDOW_UPDATE, 0, 0,
                                        struct.pack("!I", RECV_WINDOW - DEFAULT_WINDOW))
                )
        if reader_thread:
            self._reader = threading.Thread(
                target=self._read_loop, daemon=True,
                name=f"h2-reader-{'c' if self.client_side else 's'}")
            self._reader.start()
        return self

    # -- stream registry ----------------------------------------------------

    def start_stream(self, headers: list[tuple[bytes, bytes]],
                     end_stream: bool = False) -> H2Stream:
        """Client side: allocate the next stream id and send its HEADERS atomically,
        keeping stream ids strictly increasing on the wire."""
        flags = FLAG_END_HEADERS | (FLAG_END_STREAM if end_stream else 0)
        with self._write_lock:
            with self._streams_lock:
                stream = H2Stream(self._next_stream_id, self._peer_initial_window)
                self._next_stream_id += 2
                self._streams[stream.stream_id] = stream
            block = self._hpack_out.encode(headers)
            try:
                self._sock.sendall(self._frame_bytes(HEADERS, flags, stream.stream_id, block))
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from None
        return stream

    def _get_or_create(self, stream_id: int) -> tuple[H2Stream, bool]:
        with self._streams_lock:
            stream = self._streams.get(stream_id)
            if stream is None:
                stream = H2Stream(stream_id, self._peer_initial_window)
                self._streams[stream_id] = stream
                return stream, True
            return stream, False

    def forget_stream(self, stream_id: int) -> None:
        with self._streams_lock:
            self._streams.pop(stream_id, None)

    # -- frame writing -------------------------------------------------------

    @staticmethod
    def _frame_bytes(ftype: int, flags: int, stream_id: int, payload: bytes) -> bytes:
        header = struct.pack("!I", len(payload))[1:] + bytes((ftype, flags)) \
            + struct.pack("!I", stream_id & 0x7FFFFFFF)
        return header + payload

    def _send_frame(self, ftype: int, flags: int, stream_id: int, payload: bytes) -> None:
        with self._write_lock:
            try:
                self._sock.sendall(self._frame_bytes(ftype, flags, stream_id, payload))
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from None

    def send_headers(self, stream_id: int, headers: list[tuple[bytes, bytes]],
                     end_stream: bool = False) -> None:
        flags = FLAG_END_HEADERS | (FLAG_END_STREAM if end_stream else 0)
        with self._write_lock:
            block = self._hpack_out.encode(headers)  # under lock: frame order = encode order
            try:
                self._sock.sendall(self._frame_bytes(HEADERS, flags, stream_id, block))
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from None

    def send_data(self, stream: H2Stream, data: bytes, end_stream: bool = False) -> None:
        """Send data honoring both flow-control windows; blocks until sent."""
        view = memoryview(data)
        offset = 0
        total = len(data)
        while offset < total or (end_stream and total == 0):
            with self._window_cond:
                while True:
                    if self.closed:
                        raise ConnectionClosed(self.close_reason or "connection closed")
                    if stream.reset_code is not None:
                        raise ConnectionClosed(f"stream reset ({stream.reset_code})")
                    budget = min(self._conn_send_window, stream.send_window)
                    if budget > 0 or total == 0:
                        break
                    self._window_cond.wait(0.05)
                chunk = min(budget, total - offset, self._peer_max_frame)
                self._conn_send_window -= chunk
                stream.send_window -= chunk
            last = offset + chunk >= total
            flags = FLAG_END_STREAM if (end_stream and last) else 0
            # Batch every frame of this burst into one syscall.
            burst = bytearray()
            burst += self._frame_bytes(DATA, flags, stream.stream_id,
                                       bytes(view[offset:offset + chunk]))
            offset += chunk
            while last is False and offset < total:
                with self._window_cond:
                    budget = min(self._conn_send_window, stream.send_window,
                                 self._peer_max_frame)
                    if budget <= 0:
                        break
                    chunk = min(budget, total - offset)
                    self._conn_send_window -= chunk
                    stream.send_window -= chunk
                last = offset + chunk >= total
                flags = FLAG_END_STREAM if (end_stream and last) else 0
                burst += self._frame_bytes(DATA, flags, stream.stream_id,
                                           bytes(view[offset:offset + chunk]))
                offset += chunk
            with self._write_lock:
                try:
                    self._sock.sendall(burst)
                except OSError as exc:
                    raise ConnectionClosed(str(exc)) from None
            if end_stream and total == 0:
                return

    def send_rst(self, stream_id: int, code: int = ERR_CANCEL) -> None:
        try:
            self._send_frame(RST_STREAM, 0, stream_id, struct.pack("!I", code))
        except ConnectionClosed:
            pass

    def send_data_segments(self, stream: H2Stream, segments: list[bytes],
                           end_stream: bool = False) -> None:
        """Send one DATA frame from segments via scatter-gather, skipping copies.

        Falls back to send_data when the payload exceeds the peer's frame size
        or the windows lack room.
        """
        total = sum(len(s) for s in segments)
        if total <= self._peer_max_frame and self._take_window(stream, total):
            flags = FLAG_END_STREAM if end_stream else 0
            header = struct.pack("!I", total)[1:] + bytes((DATA, flags)) \
                + struct.pack("!I", stream.stream_id)
            with self._write_lock:
                try:
                    self._sock.sendmsg([header, *segments])
                except OSError as exc:
                    raise ConnectionClosed(str(exc)) from None
            return
        self.send_data(stream, b"".join(segments), end_stream=end_stream)

    def _take_window(self, stream: H2Stream, amount: int) -> bool:
        """Try to reserve window for a small payload without blocking."""
        with self._window_cond:
            if self._conn_send_window >= amount and stream.send_window >= amount:
                self._conn_send_window -= amount
                stream.send_window -= amount
                return True
        return False

    def start_stream_with_data(self, headers: list[tuple[bytes, bytes]],
                               data: bytes, end_stream: bool = True) -> H2Stream:
        """Client fast path: HEADERS + small DATA in one write; one syscall per call."""
        with self._write_lock:
            with self._streams_lock:
                stream = H2Stream(self._next_stream_id, self._peer_initial_window)
                self._next_stream_id += 2
                self._streams[stream.stream_id] = stream
            reserved = self._take_window(stream, len(data))
            if not reserved:
                block = self._hpack_out.encode(headers)
                try:
                    self._sock.sendall(
                        self._frame_bytes(HEADERS, FLAG_END_HEADERS, stream.stream_id, block))
                except OSError as exc:
                    raise ConnectionClosed(str(exc)) from None
            else:
                block = self._hpack_out.encode(headers)
                flags = FLAG_END_STREAM if end_stream else 0
                burst = (self._frame_bytes(HEADERS, FLAG_END_HEADERS, stream.stream_id, block)
                         + self._frame_bytes(DATA, flags, stream.stream_id, data))
                try:
                    self._sock.sendall(burst)
                except OSError as exc:
                    raise ConnectionClosed(str(exc)) from None
        if not reserved:
            self.send_data(stream, data, end_stream=end_stream)
        return stream

    def send_unary_response(self, stream: H2Stream,
                            headers: list[tuple[bytes, bytes]], data: bytes,
                            trailers: list[tuple[bytes, bytes]]) -> None:
        """Server fast path: response HEADERS + DATA + trailers in one write."""
        if not self._take_window(stream, len(data)):
            self.send_headers(stream.stream_id, headers)
            self.send_data(stream, data)
            self.send_headers(stream.stream_id, trailers, end_stream=True)
            return
        with self._write_lock:
            burst = (
                self._frame_bytes(HEADERS, FLAG_END_HEADERS, stream.stream_id,
                                  self._hpack_out.encode(headers))
                + self._frame_bytes(DATA, 0, stream.stream_id, data)
                + self._frame_bytes(HEADERS, FLAG_END_HEADERS | FLAG_END_STREAM,
                                    stream.stream_id, self._hpack_out.encode(trailers))
            )
            try:
                self._sock.sendall(burst)
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from None

    # -- reading -------------------------------------------------------------

    def _read_exact(self, n: int) -> bytes:
        buf = self._rbuf
        if not buf and n > (1 << 14):
            # Large payload with an empty buffer: one MSG_WAITALL fill.
            out = bytearray(n)
            try:
                got = self._sock.recv_into(memoryview(out), n, socket.MSG_WAITALL)
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from None
            if got != n:
                raise ConnectionClosed("peer closed")
            return bytes(out)
        if len(buf) < n:
            need = n - len(buf)
            tail = bytearray(max(need, 1 << 16))
            view = memoryview(tail)
            filled = 0
            while filled < need:
                try:
                    got = self._sock.recv_into(view[filled:], 0)
                except OSError as exc:
                    raise ConnectionClosed(str(exc)) from None
                if not got:
                    raise ConnectionClosed("peer closed")
                filled += got
            buf += view[:filled]
        if len(buf) == n:
            data = bytes(buf)
            buf.clear()
        else:
            data = bytes(memoryview(buf)[:n])
            del buf[:n]
        return data

    def wait_readable(self, timeout: float) -> bool:
        """True if a pump_once() would have bytes to start on."""
        if self._rbuf:
            return True
        ready, _, _ = select.select([self._sock], [], [], timeout)
        return bool(ready)

    def pump_once(self) -> None:
        """Read and dispatch exactly one frame; raises on connection failure."""
        header = self._read_exact(9)
        length = int.from_bytes(header[:3], "big")
        ftype, flags = header[3], header[4]
        stream_id = int.from_bytes(header[5:9], "big") & 0x7FFFFFFF
        payload = self._read_exact(length) if length else b""
        self._dispatch(ftype, flags, stream_id, payload)

    def pump(self) -> None:
        """Single-threaded drive: dispatch one frame, mapping failures to shutdown."""
        try:
            self.pump_once()
        except (ConnectionClosed, OSError) as exc:
            self._shutdown(str(exc))
            raise ConnectionClosed(self.close_reason or str(exc)) from None
        except HpackError as exc:
            self._shutdown(f"hpack error: {exc}")
            raise ConnectionClosed(self.close_reason or "hpack error") from None

    def _read_loop(self) -> None:
        try:
            while True:
                self.pump_once()
        except (ConnectionClosed, OSError) as exc:
            self._shutdown(str(exc))
        except HpackError as exc:
            log.warning("hpack error: %s", exc)
            self._shutdown(f"hpack error: {exc}")
        except Exception:  # noqa: BLE001 - reader must not die silently
            log.exception("http2 reader failed")
            self._shutdown("internal reader error")

    def _dispatch(self, ftype: int, flags: int, stream_id: int, payload: bytes) -> None:
        if ftype == DATA:
            self._on_data(flags, stream_id, payload)
        elif ftype == HEADERS:
            self._on_headers(flags, stream_id, payload)
        elif ftype == SETTINGS:
            if not flags & FLAG_ACK:
                self._apply_settings(payload)
                self._send_frame(SETTINGS, FLAG_ACK, 0, b"")
        elif ftype == PING:
            if not flags & FLAG_ACK:
                self._send_frame(PING, FLAG_ACK, 0, payload)
        elif ftype == WINDOW_UPDATE:
            increment = struct.unpack("!I", payload)[0] & 0x7FFFFFFF
            with self._window_cond:
                if stream_id == 0:
                    self._conn_send_window += increment
                else:
                    with self._streams_lock:
                        stream = self._streams.get(stream_id)
                    if stream is not None:
                        stream.send_window += increment
                self._window_cond.notify_all()
        elif ftype == RST_STREAM:
            code = struct.unpack("!I", payload)[0]
            with self._streams_lock:
                stream = self._streams.get(stream_id)
            if stream is not None:
                with stream.cond:
                    stream.reset_code = code
                    stream.cond.notify_all()
                stream.cancel_event()
            with self._window_cond:
                self._window_cond.notify_all()
        elif ftype == GOAWAY:
            self._shutdown("GOAWAY received")
        # PRIORITY, PUSH_PROMISE, CONTINUATION-out-of-order, unknown: ignored.

    def _strip_padding(self, flags: int, payload: bytes, priority: bool) -> bytes:
        pos = 0
        pad = 0
        if flags & FLAG_PADDED:
            pad = payload[0]
            pos = 1
        if priority and flags & FLAG_PRIORITY:
            pos += 5
        return payload[pos:len(payload) - pad]

    def _on_headers(self, flags: int, stream_id: int, payload: bytes) -> None:
        fragment = self._strip_padding(flags, payload, priority=True)
        while not flags & FLAG_END_HEADERS:
            header = self._read_exact(9)
            length = int.from_bytes(header[:3], "big")
            if header[3] != CONTINUATION:
                raise ConnectionClosed("expected CONTINUATION")
            flags = header[4] | (flags & FLAG_END_STREAM)
            fragment += self._read_exact(length)
        headers = self._hpack_in.decode(fragment)
        stream, _created = self._get_or_create(stream_id)
        with stream.cond:
            if stream.headers is None:
                stream.headers = headers
            else:
                stream.trailers = headers
            if flags & FLAG_END_STREAM:
                stream.ended = True
            stream.cond.notify_all()
        if flags & FLAG_END_STREAM:
            self._maybe_dispatch(stream)

    def _maybe_dispatch(self, stream: H2Stream) -> None:
        if self.on_request is not None and not stream.dispatched:
            stream.dispatched = True
            self.on_request(stream)

    def _on_data(self, flags: int, stream_id: int, payload: bytes) -> None:
        data = self._strip_padding(flags, payload, priority=False)
        with self._streams_lock:
            stream = self._streams.get(stream_id)
        if stream is not None:
            with stream.cond:
                stream.buffer += data
                if flags & FLAG_END_STREAM:
                    stream.ended = True
                stream.cond.notify_all()
            if flags & FLAG_END_STREAM:
                self._maybe_dispatch(stream)
        # Credit consumed bytes back lazily; the flow-control accounting uses
        # the full frame length including any padding.
        self._conn_consumed += len(payload)
        if stream is not None:
            stream.consumed_unreported += len(payload)
            if stream.consumed_unreported >= RECV_CREDIT_THRESHOLD and not stream.ended:
                self._send_frame(WINDOW_UPDATE, 0, stream_id,
                                 struct.pack("!I", stream.consumed_unreported))
                stream.consumed_unreported = 0
        if self._conn_consumed >= RECV_CREDIT_THRESHOLD:
            self._send_frame(WINDOW_UPDATE, 0, 0, struct.pack("!I", self._conn_consumed))
            self._conn_consumed = 0

    def _apply_settings(self, payload: bytes) -> None:
        for i in range(0, len(payload) - 5, 6):
            ident, value = struct.unpack_from("!HI", payload, i)
            if ident == SETTINGS_INITIAL_WINDOW_SIZE:
                with self._window_cond:
                    delta = value - self._peer_initial_window
                    self._peer_initial_window = value
                    with self._streams_lock:
                        for stream in self._streams.values():
                            stream.send_window += delta
                    self._window_cond.notify_all()
            elif ident == SETTINGS_MAX_FRAME_SIZE:
                self._peer_max_frame = max(16384, min(value, (1 << 24) - 1))
            elif ident == SETTINGS_HEADER_TABLE_SIZE:
                pass  # our encoder never uses the dynamic table

    # -- teardown ------------------------------------------------------------

    def _shutdown(self, reason: str) -> None:
        if self.closed:
            return
        self.closed = True
        self.close_reason = reason
        with self._streams_lock:
            streams = list(self._streams.values())
        for stream in streams:
            with stream.cond:
                if stream.reset_code is None:
                    stream.reset_code = ERR_NO_ERROR
                stream.cond.notify_all()
            stream.cancel_event()
        with self._window_cond:
            self._window_cond.notify_all()
        try:
            self._sock.close()
        except OSError:
            pass

    def close(self) -> None:
        try:
            self._send_frame(GOAWAY, 0, 0, struct.pack("!II", 0, ERR_NO_ERROR))
        except ConnectionClosed:
            pass
        self._shutdown("closed locally")
