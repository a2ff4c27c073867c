"""Lean gRPC endpoint (cleartext HTTP/2, prior knowledge) on blocking sockets.

Implements the subset the FrameGate service needs: unary and server-streaming
methods with protobuf payloads, trailers-based status, deadlines, and
cancellation.  Wire-compatible with standard gRPC stacks; the test suite
exercises interop against grpcio and the TypeScript client uses @grpc/grpc-js.

Unary handlers run inline on the connection's reader thread and must not
block; streaming handlers get a dedicated thread.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable
from urllib.parse import quote, unquote

from .http2 import ConnectionClosed, ERR_CANCEL, H2Connection, H2Stream

log = logging.getLogger(__name__)


class StatusCode(IntEnum):
    OK = 0
    CANCELLED = 1
    UNKNOWN = 2
    INVALID_ARGUMENT = 3
    DEADLINE_EXCEEDED = 4
    NOT_FOUND = 5
    ALREADY_EXISTS = 6
    PERMISSION_DENIED = 7
    RESOURCE_EXHAUSTED = 8
    FAILED_PRECONDITION = 9
    ABORTED = 10
    OUT_OF_RANGE = 11
    UNIMPLEMENTED = 12
    INTERNAL = 13
    UNAVAILABLE = 14
    DATA_LOSS = 15
    UNAUTHENTICATED = 16


class RpcError(Exception):
    """Raised by client calls on non-OK status; mirrors grpc.RpcError's accessors."""

    def __init__(self, code: StatusCode, details: str = ""):
        super().__init__(f"{code.name}: {details}")
        self._code = code
        self._details = details

    def code(self) -> StatusCode:
        return self._code

    def details(self) -> str:
        return self._details


class _Abort(Exception):
    def __init__(self, code: StatusCode, details: str):
        self.code = code
        self.details = details


# -- message framing (1-byte compressed flag + 4-byte big-endian length) ------

def pack_message(payload: bytes) -> bytes:
    return struct.pack("!BI", 0, len(payload)) + payload


def _pop_message(buffer: bytearray) -> bytes | None:
    if len(buffer) < 5:
        return None
    flag, length = struct.unpack_from("!BI", buffer)
    if flag:
        raise RpcError(StatusCode.UNIMPLEMENTED, "compressed messages not supported")
    total = 5 + length
    if len(buffer) < total:
        return None
    if len(buffer) == total:  # common case: avoid the tail memmove
        message = bytes(memoryview(buffer)[5:])
        buffer.clear()
    else:
        message = bytes(memoryview(buffer)[5:total])
        del buffer[:total]
    return message


GRPC_HEADERS = (b"content-type", b"application/grpc")


def _trailers(code: StatusCode, details: str) -> list[tuple[bytes, bytes]]:
    trailers = [(b"grpc-status", str(int(code)).encode())]
    if details:
        trailers.append((b"grpc-message", quote(details).encode()))
    return trailers


# -- server --------------------------------------------------------------------

@dataclass(frozen=True)
class MethodDef:
    """One service method; handlers take (request_message, context)."""

    handler: Callable
    request_deserializer: Callable[[bytes], object]
    response_serializer: Callable[[object], bytes]
    server_streaming: bool = False


class ServicerContext:
    """What handlers get: abort, cancellation callbacks, liveness, manual sends.

    Streaming handlers may either return an iterator of responses, or drive
    send_message themselves (from any single producer thread) and return None
    once the stream is done.
    """

    def __init__(self, conn: H2Connection, stream: H2Stream, mdef: MethodDef):
        self._conn = conn
        self._stream = stream
        self._mdef = mdef
        self.sent_headers = False

    def abort(self, code: StatusCode, details: str = ""):
        raise _Abort(code, details)

    def add_callback(self, callback: Callable[[], None]) -> None:
        self._stream.on_cancel.append(callback)

    def is_active(self) -> bool:
        return self._stream.reset_code is None and not self._conn.closed

    def send_message(self, message) -> None:
        self.send_message_bytes(self._mdef.response_serializer(message))

    def send_message_bytes(self, payload: bytes) -> None:
        """Send one pre-serialized response message without further copies."""
        if not self.sent_headers:
            self._conn.send_headers(self._stream.stream_id,
                                    [(b":status", b"200"), GRPC_HEADERS])
            self.sent_headers = True
        self._conn.send_data_segments(
            self._stream, [struct.pack("!BI", 0, len(payload)), payload])


class LiteServer:
    """Accepts connections and dispatches requests against a method table."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.5)  # closing a socket does not wake accept() here
        self.host = host
        self.port = self._listener.getsockname()[1]
        self._methods: dict[bytes, MethodDef] = {}
        self._conns: list[H2Connection] = []
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="grpclite-accept", daemon=True)
        self._stopping = False

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def add_service(self, service_name: str, methods: dict[str, MethodDef]) -> None:
        for method_name, mdef in methods.items():
            self._methods[f"/{service_name}/{method_name}".encode()] = mdef

    def start(self) -> LiteServer:
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stopping = True
        self._listener.close()
        for conn in list(self._conns):
            conn.close()
        for t in list(self._threads):
            t.join(timeout=5)

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                sock, _peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                sock.settimeout(None)
                conn = H2Connection(sock, client_side=False)
                conn.on_request = lambda stream, c=conn: self._dispatch(c, stream)
                conn.start()
                self._conns.append(conn)
            except (ConnectionClosed, OSError) as exc:
                log.warning("handshake failed: %s", exc)

    def _dispatch(self, conn: H2Connection, stream: H2Stream) -> None:
        headers = dict(stream.headers or [])
        mdef = self._methods.get(headers.get(b":path", b""))
        if mdef is None:
            self._respond_error(conn, stream, StatusCode.UNIMPLEMENTED, "unknown method")
            return
        try:
            body = bytearray(stream.buffer)
            raw = _pop_message(body)
            if raw is None:
                self._respond_error(conn, stream, StatusCode.INTERNAL, "missing request message")
                return
            request = mdef.request_deserializer(raw)
        except Exception as exc:  # noqa: BLE001 - malformed request
            self._respond_error(conn, stream, StatusCode.INTERNAL, f"bad request: {exc}")
            return
        if mdef.server_streaming:
            t = threading.Thread(target=self._run_streaming,
                                 args=(conn, stream, mdef, request),
                                 name=f"grpclite-stream-{stream.stream_id}")
            t.start()
            self._threads.append(t)
        else:
            self._run_unary(conn, stream, mdef, request)

    def _respond_error(self, conn: H2Connection, stream: H2Stream,
                       code: StatusCode, details: str) -> None:
        try:
            # Trailers-only response.
            conn.send_headers(stream.stream_id,
                              [(b":status", b"200"), GRPC_HEADERS]
                              + _trailers(code, details), end_stream=True)
        except ConnectionClosed:
            pass
        conn.forget_stream(stream.stream_id)

    def _run_unary(self, conn: H2Connection, stream: H2Stream,
                   mdef: MethodDef, request) -> None:
        context = ServicerContext(conn, stream, mdef)
        try:
            response = mdef.handler(request, context)
        except _Abort as abort:
            self._respond_error(conn, stream, abort.code, abort.details)
            return
        except Exception as exc:  # noqa: BLE001 - handler bug becomes INTERNAL
            log.exception("unary handler failed")
            self._respond_error(conn, stream, StatusCode.INTERNAL, str(exc))
            return
        try:
            conn.send_unary_response(
                stream,
                [(b":status", b"200"), GRPC_HEADERS],
                pack_message(mdef.response_serializer(response)),
                _trailers(StatusCode.OK, ""),
            )
        except ConnectionClosed:
            pass
        conn.forget_stream(stream.stream_id)

    def _run_streaming(self, conn: H2Connection, stream: H2Stream,
                       mdef: MethodDef, request) -> None:
        context = ServicerContext(conn, stream, mdef)
        code, details = StatusCode.OK, ""
        try:
            result = mdef.handler(request, context)
            if result is not None:
                for response in result:
                    context.send_message(response)
        except _Abort as abort:
            code, details = abort.code, abort.details
        except ConnectionClosed:
            conn.forget_stream(stream.stream_id)
            return
        except Exception as exc:  # noqa: BLE001 - handler bug becomes INTERNAL
            log.exception("streaming handler failed")
            code, details = StatusCode.INTERNAL, str(exc)
        try:
            if context.sent_headers:
                conn.send_headers(stream.stream_id, _trailers(code, details),
                                  end_stream=True)
            else:
                conn.send_headers(stream.stream_id,
                                  [(b":status", b"200"), GRPC_HEADERS]
                                  + _trailers(code, details), end_stream=True)
        except ConnectionClosed:
            pass
        conn.forget_stream(stream.stream_id)


# -- client --------------------------------------------------------------------

def _status_from_trailers(trailers: list[tuple[bytes, bytes]] | None,
                          headers: list[tuple[bytes, bytes]] | None
                          ) -> tuple[StatusCode, str] | None:
    for source in (trailers, headers):
        if not source:
            continue
        mapping = dict(source)
        if b"grpc-status" in mapping:
            code = StatusCode(int(mapping[b"grpc-status"]))
            details = unquote(mapping.get(b"grpc-message", b"").decode())
            return code, details
    return None


class LiteChannel:
    """One HTTP/2 connection to a gRPC server, driven by its calling thread.

    There is no background reader: calls pump frames synchronously, so a
    channel belongs to one logical consumer at a time (streams and unary calls
    may interleave on that thread).
    """

    def __init__(self, address: str, connect_timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        self.address = address
        try:
            sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                            timeout=connect_timeout)
        except OSError as exc:
            raise RpcError(StatusCode.UNAVAILABLE, f"cannot connect to {address}: {exc}") \
                from None
        sock.settimeout(None)
        self._conn = H2Connection(sock, client_side=True).start(reader_thread=False)

    def close(self) -> None:
        self._conn.close()

    def _pump(self, deadline: float | None) -> bool:
        """Dispatch the next frame; False if the deadline expired first."""
        conn = self._conn
        if deadline is not None:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not conn.wait_readable(remaining):
                return False
        try:
            conn.pump()
        except ConnectionClosed:
            pass  # callers observe conn.closed / stream state
        return True

    def fileno(self) -> int:
        """For select()-based multiplexing of several channels on one thread."""
        return self._conn._sock.fileno()

    def pump_pending(self) -> None:
        """Dispatch whatever frames are immediately available, without blocking."""
        conn = self._conn
        while not conn.closed and conn.wait_readable(0):
            try:
                conn.pump()
            except ConnectionClosed:
                return

    def pump_available(self, socket_ready: bool) -> None:
        """Dispatch frames using an external readiness hint instead of select.

        With socket_ready one frame is read (blocking only for bytes already in
        flight); buffered leftovers are then drained without syscalls.
        """
        conn = self._conn
        if conn.closed:
            return
        try:
            if socket_ready:
                conn.pump()
            while not conn.closed and conn._rbuf:
                conn.pump()
        except ConnectionClosed:
            return

    def _request_headers(self, path: str) -> list[tuple[bytes, bytes]]:
        return [
            (b":method", b"POST"),
            (b":scheme", b"http"),
            (b":path", path.encode()),
            (b":authority", self.address.encode()),
            (b"te", b"trailers"),
            (b"content-type", b"application/grpc"),
            (b"user-agent", b"framegate-lite"),
        ]

    def _start_call(self, path: str, request_bytes: bytes) -> H2Stream:
        if self._conn.closed:
            raise RpcError(StatusCode.UNAVAILABLE,
                           self._conn.close_reason or "channel closed")
        try:
            stream = self._conn.start_stream_with_data(
                self._request_headers(path), pack_message(request_bytes))
        except ConnectionClosed as exc:
            raise RpcError(StatusCode.UNAVAILABLE, str(exc)) from None
        return stream

    def unary_unary(self, path: str, request_serializer, response_deserializer):
        def call(request, timeout: float | None = None):
            deadline = None if timeout is None else time.monotonic() + timeout
            stream = self._start_call(path, request_serializer(request))
            conn = self._conn
            message = None
            try:
                while True:
                    msg = _pop_message(stream.buffer)
                    if msg is not None:
                        message = msg
                    if stream.trailers is not None or stream.ended:
                        status = _status_from_trailers(stream.trailers, stream.headers)
                        if status is None:
                            raise RpcError(StatusCode.INTERNAL, "no grpc-status received")
                        code, details = status
                        if code is not StatusCode.OK:
                            raise RpcError(code, details)
                        if message is None:
                            raise RpcError(StatusCode.INTERNAL, "missing response message")
                        return response_deserializer(message)
                    if stream.reset_code is not None:
                        raise RpcError(StatusCode.UNAVAILABLE,
                                       f"stream reset ({stream.reset_code})")
                    if conn.closed:
                        raise RpcError(StatusCode.UNAVAILABLE,
                                       conn.close_reason or "connection closed")
                    if not self._pump(deadline):
                        conn.send_rst(stream.stream_id, ERR_CANCEL)
                        raise RpcError(StatusCode.DEADLINE_EXCEEDED,
                                       f"deadline of {timeout}s exceeded")
            finally:
                conn.forget_stream(stream.stream_id)

        return call

    def unary_stream(self, path: str, request_serializer, response_deserializer=None):
        def call(request):
            stream = self._start_call(path, request_serializer(request))
            return _StreamingResponse(self, stream, response_deserializer)

        return call

    def unary_unary_deferred(self, path: str, request_serializer,
                             response_deserializer):
        """Begin a unary call without blocking; resolve it from later pumps."""

        def begin(request) -> _PendingUnary:
            stream = self._start_call(path, request_serializer(request))
            return _PendingUnary(self._conn, stream, response_deserializer)

        return begin


class _PendingUnary:
    """An in-flight unary call; poll() after pumping the channel."""

    def __init__(self, conn: H2Connection, stream: H2Stream, deserializer):
        self._conn = conn
        self._stream = stream
        self._deserializer = deserializer
        self._message = None

    def poll(self):
        """Non-blocking: the response when complete, else None; raises on failure."""
        stream = self._stream
        msg = _pop_message(stream.buffer)
        if msg is not None:
            self._message = msg
        if stream.trailers is not None or stream.ended:
            self._conn.forget_stream(stream.stream_id)
            status = _status_from_trailers(stream.trailers, stream.headers)
            if status is None:
                raise RpcError(StatusCode.INTERNAL, "no grpc-status received")
            code, details = status
            if code is not StatusCode.OK:
                raise RpcError(code, details)
            if self._message is None:
                raise RpcError(StatusCode.INTERNAL, "missing response message")
            return self._deserializer(self._message)
        if stream.reset_code is not None:
            raise RpcError(StatusCode.UNAVAILABLE, f"stream reset ({stream.reset_code})")
        if self._conn.closed:
            raise RpcError(StatusCode.UNAVAILABLE,
                           self._conn.close_reason or "connection closed")
        return None


class _StreamingResponse:
    """Iterator over a server stream's messages; raises RpcError on bad status."""

    END = object()  # poll() sentinel: stream finished cleanly

    def __init__(self, channel: LiteChannel, stream: H2Stream, deserializer):
        self._channel = channel
        self._conn = channel._conn
        self._stream = stream
        self._deserializer = deserializer
        self._done = False

    def __iter__(self):
        return self

    def poll(self):
        """Non-blocking: next buffered message, END when over, None when pending."""
        if self._done:
            return self.END
        stream = self._stream
        message = _pop_message(stream.buffer)
        if message is not None:
            return self._deserializer(message) if self._deserializer else message
        if stream.trailers is not None or stream.ended:
            self._done = True
            self._conn.forget_stream(stream.stream_id)
            status = _status_from_trailers(stream.trailers, stream.headers)
            if status is not None and status[0] is not StatusCode.OK:
                raise RpcError(*status)
            return self.END
        if stream.reset_code is not None:
            self._done = True
            raise RpcError(StatusCode.UNAVAILABLE, f"stream reset ({stream.reset_code})")
        if self._conn.closed:
            self._done = True
            raise RpcError(StatusCode.UNAVAILABLE,
                           self._conn.close_reason or "connection closed")
        return None

    def __next__(self):
        if self._done:
            raise StopIteration
        stream = self._stream
        while True:
            message = _pop_message(stream.buffer)
            if message is not None:
                return self._deserializer(message) if self._deserializer else message
            if stream.trailers is not None or stream.ended:
                self._done = True
                self._conn.forget_stream(stream.stream_id)
                status = _status_from_trailers(stream.trailers, stream.headers)
                if status is not None and status[0] is not StatusCode.OK:
                    raise RpcError(*status)
                raise StopIteration
            if stream.reset_code is not None:
                self._done = True
                raise RpcError(StatusCode.UNAVAILABLE,
                               f"stream reset ({stream.reset_code})")
            if self._conn.closed:
                self._done = True
                raise RpcError(StatusCode.UNAVAILABLE,
                               self._conn.close_reason or "connection closed")
            self._channel._pump(None)

    def cancel(self) -> None:
        self._done = True
        self._conn.send_rst(self._stream.stream_id, ERR_CANCEL)
        self._conn.forget_stream(self._stream.stream_id)
