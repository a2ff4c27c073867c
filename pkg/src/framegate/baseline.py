"""Per-call text-socket transport: the latency baseline the RPC path is compared against.

The protocol emulates a bridge that fetches state through many small
request/response round trips per frame.  All lines are UTF-8, newline
terminated:

    client: JOIN <slot> <name>          server: WELCOME <K>
    server: NOTIFY <frame_index>
    client: GET <i>                     server: VAL <i> <base64 chunk i>   (K times)
    client: ACTION <string>             server: OK

Chunks 0..K-1 are a deterministic even partition of the serialized view, so
the client can reassemble the exact view the RPC path would have streamed.
Both transports drive the same frame gate.
"""

from __future__ import annotations

import base64
import logging
import socket
import threading
from dataclasses import dataclass

from .errors import BaselineProtocolError, GateAborted
from .game import ActionCommand, PlayerGameData, parse_action
from .loop import GameRunner
from .wire import view_from_bytes, view_to_bytes

log = logging.getLogger(__name__)

DEFAULT_BASELINE_PORT = 50052


@dataclass(frozen=True)
class BaselineConfig:
    port: int = DEFAULT_BASELINE_PORT
    accessor_calls_per_frame: int = 8  # K: GETs per frame

    def validate(self) -> BaselineConfig:
        if self.accessor_calls_per_frame < 0:
            raise ValueError("accessor_calls_per_frame must be >= 0")
        return self


def partition_chunks(blob: bytes, k: int) -> list[bytes]:
    """Split blob into k chunks whose sizes differ by at most one byte."""
    if k <= 0:
        return []
    base, rem = divmod(len(blob), k)
    chunks = []
    offset = 0
    for i in range(k):
        size = base + (1 if i < rem else 0)
        chunks.append(blob[offset:offset + size])
        offset += size
    return chunks


class BaselineServer:
    """One handler thread per connection; bridges lines to the shared gate."""

    def __init__(self, runner: GameRunner, config: BaselineConfig | None = None,
                 host: str = "127.0.0.1"):
        self.runner = runner
        self.config = (config or BaselineConfig()).validate()
        self._listener = socket.create_server((host, self.config.port))
        self._listener.settimeout(0.5)  # closing a socket does not wake accept() here
        self.host = host
        self.port = self._listener.getsockname()[1]
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="baseline-accept", daemon=True)
        self._stopping = False

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> BaselineServer:
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stopping = True
        self._listener.close()
        self._accept_thread.join(timeout=5)
        for t in self._threads:
            t.join(timeout=5)

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                conn, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return  # listener closed
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(target=self._serve_connection, args=(conn, peer),
                                 name=f"baseline-{peer[1]}", daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_connection(self, conn: socket.socket, peer) -> None:
        slot = None
        k = self.config.accessor_calls_per_frame
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")
        try:
            line = rfile.readline().decode().rstrip("\n")
            parts = line.split(" ", 2)
            if len(parts) < 3 or parts[0] != "JOIN" or parts[1] not in ("1", "2"):
                raise BaselineProtocolError(f"expected JOIN <slot> <name>, got {line!r}")
            slot = int(parts[1])
            self.runner.claim_slot(slot, parts[2], blind=False)
            wfile.write(f"WELCOME {k}\n".encode())
            wfile.flush()
            self.runner.mark_streaming(slot)

            gate = self.runner.gate
            last_seq = 0
            while True:
                item = gate.next_view(slot, last_seq)
                if item is None:
                    return  # game over
                last_seq, view = item
                self._serve_frame(rfile, wfile, slot, view, k)
        except (BaselineProtocolError, ConnectionError, ValueError) as exc:
            log.warning("baseline connection %s closed: %s", peer, exc)
            if slot is not None:
                self.runner.consumer_lost(slot)
        except (GateAborted, OSError):
            pass
        finally:
            conn.close()

    def _serve_frame(self, rfile, wfile, slot: int, view: PlayerGameData, k: int) -> None:
        chunks = partition_chunks(view_to_bytes(view), k)
        wfile.write(f"NOTIFY {view.frame_index}\n".encode())
        wfile.flush()
        while True:
            raw = rfile.readline()
            if not raw:
                raise ConnectionError("client went away mid-frame")
            line = raw.decode().rstrip("\n")
            verb, _, rest = line.partition(" ")
            if verb == "GET":
                try:
                    i = int(rest)
                    chunk = chunks[i]
                except (ValueError, IndexError):
                    raise BaselineProtocolError(f"bad GET index {rest!r}") from None
                payload = base64.b64encode(chunk).decode()
                wfile.write(f"VAL {i} {payload}\n".encode())
                wfile.flush()
            elif verb == "ACTION":
                self.runner.gate.submit_action(slot, rest)
                wfile.write(b"OK\n")
                wfile.flush()
                return
            else:
                raise BaselineProtocolError(f"unexpected line {line!r}")


def serve_baseline(runner: GameRunner, config: BaselineConfig | None = None,
                   host: str = "127.0.0.1") -> BaselineServer:
    """Start a baseline server; raises OSError if the port is busy."""
    return BaselineServer(runner, config, host).start()


class BaselineConnection:
    """Client side of the line protocol for one player slot."""

    def __init__(self, address: str, slot: int, name: str, timeout: float = 30.0):
        host, _, port = address.rpartition(":")
        self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")
        self.slot = slot
        self.lines_sent = 0
        self.lines_received = 0
        self._send(f"JOIN {slot} {name}")
        welcome = self._recv()
        if welcome is None or not welcome.startswith("WELCOME "):
            raise BaselineProtocolError(f"bad welcome: {welcome!r}")
        self.k = int(welcome.split(" ", 1)[1])

    def _send(self, line: str) -> None:
        self._wfile.write((line + "\n").encode())
        self._wfile.flush()
        self.lines_sent += 1

    def _recv(self) -> str | None:
        raw = self._rfile.readline()
        if not raw:
            return None
        self.lines_received += 1
        return raw.decode().rstrip("\n")

    def run_frame(self, agent) -> ActionCommand | None:
        """Handle one frame: fetch the view in K calls, ask the agent, send the action.

        Returns None on clean end of game (server closed between frames).
        """
        notify = self._recv()
        if notify is None:
            return None
        if not notify.startswith("NOTIFY "):
            raise BaselineProtocolError(f"expected NOTIFY, got {notify!r}")
        frame_index = int(notify.split(" ", 1)[1])

        parts = []
        for i in range(self.k):
            self._send(f"GET {i}")
            reply = self._recv()
            if reply is None:
                raise ConnectionError("server closed mid-frame")
            tag, idx, payload = (reply.split(" ", 2) + ["", ""])[:3]
            if tag != "VAL" or int(idx) != i:
                raise BaselineProtocolError(f"bad VAL reply {reply!r}")
            parts.append(base64.b64decode(payload))
        if self.k > 0:
            view = view_from_bytes(b"".join(parts))
        else:
            view = PlayerGameData(frame_index=frame_index, audio_data=b"")

        action = agent(view)
        action = action.value if hasattr(action, "value") else str(action)
        self._send(f"ACTION {action}")
        ok = self._recv()
        if ok != "OK":
            raise ConnectionError(f"no OK after ACTION, got {ok!r}")
        return parse_action(action)[0]

    def run_game(self, agent) -> int:
        """Run frames until the server closes; returns the number handled."""
        frames = 0
        while self.run_frame(agent) is not None:
            frames += 1
        return frames

    def close(self) -> None:
        self._sock.close()


def baseline_client_run_frame(connection: BaselineConnection, agent) -> ActionCommand | None:
    return connection.run_frame(agent)
