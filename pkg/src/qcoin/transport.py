"""Newline-delimited JSON framing of protocol messages, plus channels.

Every frame is one compact JSON object ending in ``\\n`` with a ``type``
discriminator.  ``LoopbackChannel`` pairs run in-process; ``SocketChannel``
wraps a TCP stream.  ``serve_bank`` runs one bank session per connection.
"""
from __future__ import annotations

import itertools
import json
import logging
import queue
import socket
import socketserver
import threading
from collections.abc import Callable
from dataclasses import dataclass, field

from .coin import BankLedger, QCoin
from .protocol import (
    BankBits,
    BankChallenge,
    BankSession,
    BankState,
    HolderBase,
    HolderResults,
    HolderSelection,
    HolderSession,
    Message,
    MessageError,
    ProtocolParams,
    Reason,
    Verdict,
    VerificationResult,
    VerifyRequest,
)
from .qsim import RngSeed

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
MAX_FRAME = 1 << 20
ENV_BANK_ADDR = "QCOIN_BANK_ADDR"

_JSON = {"separators": (",", ":"), "ensure_ascii": False}


class CodecError(ValueError):
    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field = field_name


def _to_obj(msg: Message) -> dict:
    if isinstance(msg, VerifyRequest):
        return {"type": "verify_request", "coin_id": msg.coin_id}
    if isinstance(msg, BankChallenge):
        return {"type": "bank_challenge", "indices": list(msg.indices)}
    if isinstance(msg, HolderSelection):
        return {"type": "holder_selection", "indices": list(msg.indices)}
    if isinstance(msg, BankBits):
        return {"type": "bank_bits", "m": list(msg.m)}
    if isinstance(msg, HolderResults):
        return {"type": "holder_results", "pairs": [[p.a, p.b] for p in msg.pairs]}
    if isinstance(msg, Verdict):
        return {"type": "verdict", "valid": msg.valid, "reason": msg.reason.value}
    raise CodecError(f"not a protocol message: {msg!r}")


_FIELDS = {
    "verify_request": (VerifyRequest, ("coin_id",)),
    "bank_challenge": (BankChallenge, ("indices",)),
    "holder_selection": (HolderSelection, ("indices",)),
    "bank_bits": (BankBits, ("m",)),
    "holder_results": (HolderResults, ("pairs",)),
    "verdict": (Verdict, ("valid", "reason")),
}


def encode(msg: Message) -> bytes:
    # dataclass validation already ran at construction; re-run it for objects
    # that were mutated behind our back
    obj = _to_obj(msg)
    try:
        type(msg)(*(getattr(msg, f) for f in _FIELDS[obj["type"]][1]))
    except MessageError as e:
        raise CodecError(str(e), e.field) from None
    return json.dumps(obj, **_JSON).encode("utf-8") + b"\n"


def _from_obj(obj) -> Message:
    if not isinstance(obj, dict):
        raise CodecError("frame must be a JSON object")
    tag = obj.get("type")
    if tag not in _FIELDS:
        raise CodecError(f"unknown message type {tag!r}", "type")
    cls, names = _FIELDS[tag]
    extra = set(obj) - set(names) - {"type"}
    if extra:
        raise CodecError(f"unexpected field {sorted(extra)[0]!r} in {tag}", sorted(extra)[0])
    for n in names:
        if n not in obj:
            raise CodecError(f"missing field {n!r} in {tag}", n)
    if tag in ("bank_challenge", "holder_selection", "bank_bits", "holder_results"):
        if not isinstance(obj[names[0]], list):
            raise CodecError(f"{names[0]}: must be a list", names[0])
    if tag == "verdict" and not isinstance(obj["reason"], str):
        raise CodecError("reason: must be a string", "reason")
    try:
        return cls(*(obj[n] for n in names))
    except MessageError as e:
        raise CodecError(str(e), e.field) from None


def decode(data: bytes) -> tuple[Message | None, bytes]:
    """Parse the first frame of ``data``.

    Returns ``(message, remaining_bytes)``; ``(None, data)`` means no complete
    frame yet.  Malformed frames raise ``CodecError``.
    """
    end = data.find(b"\n")
    if end < 0:
        if len(data) > MAX_FRAME:
            raise CodecError("frame too long")
        return None, data
    line, rest = data[:end], data[end + 1:]
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CodecError(f"malformed frame: {e}") from None
    return _from_obj(obj), rest


def decode_frame(frame: bytes) -> Message:
    msg, rest = decode(frame)
    if msg is None or rest:
        raise CodecError("expected exactly one complete frame")
    return msg


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) < 65536:
        raise ValueError(f"endpoint must look like host:port, got {text!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


# --- channels ------------------------------------------------------------------

class ChannelClosed(Exception):
    pass


class ChannelTimeout(Exception):
    pass


class _Channel:
    """Message channel that logs every raw frame it sends or receives."""

    def __init__(self):
        self.frames: list[bytes] = []

    def transcript_bytes(self) -> bytes:
        return b"".join(self.frames)

    def send(self, msg: Message) -> None:
        frame = encode(msg)
        self._send_raw(frame)
        self.frames.append(frame)

    def recv(self, timeout: float | None = DEFAULT_TIMEOUT) -> Message:
        frame = self._recv_raw(timeout)
        self.frames.append(frame)
        return decode_frame(frame)


class LoopbackChannel(_Channel):
    """In-memory byte pipe; ``pair()`` gives the two connected ends."""

    _EOF = object()

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        super().__init__()
        self._inbox, self._outbox = inbox, outbox

    @classmethod
    def pair(cls) -> tuple[LoopbackChannel, LoopbackChannel]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b), cls(b, a)

    def _send_raw(self, frame: bytes) -> None:
        self._outbox.put(frame)

    def send_raw(self, frame: bytes) -> None:
        self._outbox.put(frame)

    def _recv_raw(self, timeout):
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelTimeout() from None
        if item is self._EOF:
            self._inbox.put(item)
            raise ChannelClosed()
        return item

    def close(self) -> None:
        self._outbox.put(self._EOF)


class SocketChannel(_Channel):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self.sock = sock
        self._buf = b""

    @classmethod
    def connect(cls, endpoint: str | tuple[str, int], timeout: float = DEFAULT_TIMEOUT) -> SocketChannel:
        addr = parse_endpoint(endpoint) if isinstance(endpoint, str) else endpoint
        return cls(socket.create_connection(addr, timeout=timeout))

    def _send_raw(self, frame: bytes) -> None:
        self.sock.sendall(frame)

    def send_raw(self, frame: bytes) -> None:
        self.sock.sendall(frame)

    def _recv_raw(self, timeout):
        self.sock.settimeout(timeout)
        while True:
            end = self._buf.find(b"\n")
            if end >= 0:
                frame, self._buf = self._buf[:end + 1], self._buf[end + 1:]
                return frame
            if len(self._buf) > MAX_FRAME:
                raise CodecError("frame too long")
            try:
                chunk = self.sock.recv(65536)
            except TimeoutError:
                raise ChannelTimeout() from None
            except OSError:
                raise ChannelClosed() from None
            if not chunk:
                raise ChannelClosed()
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


# --- session drivers -------------------------------------------------------------

def run_bank_over(bank: BankSession, channel: _Channel, timeout: float = DEFAULT_TIMEOUT) -> Verdict:
    """Serve one bank session on ``channel`` until a verdict is sent or the peer leaves."""
    while not bank.done:
        try:
            msg = channel.recv(timeout)
        except CodecError as e:
            log.debug("undecodable frame: %s", e)
            channel.send(bank.abort(Reason.PROTOCOL_VIOLATION))
            break
        except ChannelTimeout:
            channel.send(bank.abort(Reason.TIMEOUT))
            break
        except ChannelClosed:
            # an honest holder only hangs up after the challenge when its coin is exhausted
            exhausted = bank.state is BankState.AWAIT_SELECTION
            return bank.abort(Reason.COIN_EXHAUSTED if exhausted else Reason.PROTOCOL_VIOLATION)
        channel.send(bank.step(msg))
    return bank.verdict


def run_holder_over(holder: HolderBase, channel: _Channel, timeout: float = DEFAULT_TIMEOUT) -> VerificationResult:
    transcript: list[Message] = []
    msg = holder.start()
    while msg is not None:
        channel.send(msg)
        transcript.append(msg)
        try:
            reply = channel.recv(timeout)
        except CodecError:
            holder.abort(Reason.PROTOCOL_VIOLATION)
            break
        except ChannelTimeout:
            holder.abort(Reason.TIMEOUT)
            break
        except ChannelClosed:
            holder.abort(Reason.PROTOCOL_VIOLATION)
            break
        transcript.append(reply)
        msg = holder.step(reply)
    return VerificationResult(holder.verdict, transcript)


def verify_remote(coin: QCoin, endpoint: str | tuple[str, int], rng: RngSeed,
                  timeout: float = DEFAULT_TIMEOUT) -> VerificationResult:
    """Verify ``coin`` against a bank service; updates the coin in place."""
    channel = SocketChannel.connect(endpoint, timeout)
    try:
        return run_holder_over(HolderSession(coin, rng), channel, timeout)
    finally:
        channel.close()


def verify_loopback(ledger: BankLedger, coin: QCoin, params: ProtocolParams,
                    rng_bank: RngSeed, rng_holder: RngSeed,
                    timeout: float = DEFAULT_TIMEOUT) -> tuple[VerificationResult, LoopbackChannel]:
    """One session over an in-memory channel, bank on a helper thread.

    Returns the holder's result and its channel (whose ``frames`` hold the
    wire transcript).
    """
    holder_end, bank_end = LoopbackChannel.pair()
    bank = BankSession(ledger, params, rng_bank)
    worker = threading.Thread(target=run_bank_over, args=(bank, bank_end, timeout), daemon=True)
    worker.start()
    try:
        result = run_holder_over(HolderSession(coin, rng_holder), holder_end, timeout)
    finally:
        holder_end.close()
        worker.join(timeout)
    return result, holder_end


# --- bank service ----------------------------------------------------------------

@dataclass
class SessionLog:
    session: int
    peer: str
    coin_id: str | None
    verdict: Verdict | None
    frames: list[bytes] = field(default_factory=list)


class _Handler(socketserver.BaseRequestHandler):
    server: _BankServer

    def handle(self):
        srv = self.server
        n = srv.next_session()
        bank = BankSession(srv.ledger, srv.params, srv.seed.child(n))
        channel = SocketChannel(self.request)
        try:
            verdict = run_bank_over(bank, channel, srv.timeout)
        except OSError as e:
            log.warning("session %d: connection error %s", n, e)
            verdict = bank.abort(Reason.PROTOCOL_VIOLATION)
        entry = SessionLog(n, "%s:%s" % self.client_address[:2], bank.coin_id, verdict, channel.frames)
        srv.record(entry)
        log.info("session=%d coin_id=%s valid=%s reason=%s", n, bank.coin_id,
                 verdict.valid if verdict else None, verdict.reason.value if verdict else None)


class _BankServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, ledger, params, seed, timeout, on_session):
        super().__init__(addr, _Handler)
        self.ledger, self.params, self.seed, self.timeout = ledger, params, seed, timeout
        self._counter = itertools.count()
        self._lock = threading.Lock()
        self.sessions: list[SessionLog] = []
        self._on_session = on_session

    def next_session(self) -> int:
        with self._lock:
            return next(self._counter)

    def record(self, entry: SessionLog) -> None:
        with self._lock:
            self.sessions.append(entry)
        if self._on_session:
            self._on_session(entry)


class BankService:
    """Handle for a running bank daemon.  Usable as a context manager."""

    def __init__(self, server: _BankServer):
        self._server = server
        self._thread = threading.Thread(target=server.serve_forever, name="qcoin-bank", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    @property
    def sessions(self) -> list[SessionLog]:
        with self._server._lock:
            return list(self._server.sessions)

    def start(self) -> BankService:
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def close(self) -> None:
        if self._thread.is_alive():
            self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_bank(ledger: BankLedger, endpoint: str | tuple[str, int], params: ProtocolParams,
               seed: RngSeed | None = None, timeout: float = DEFAULT_TIMEOUT,
               background: bool = True, on_session: Callable[[SessionLog], None] | None = None) -> BankService:
    """Bind and start the bank.  Session n draws from ``seed.child(n)``.

    Bind failures raise ``OSError`` before anything is served.
    """
    addr = parse_endpoint(endpoint) if isinstance(endpoint, str) else endpoint
    server = _BankServer(addr, ledger, params, seed or RngSeed.fresh(), timeout, on_session)
    service = BankService(server)
    return service.start() if background else service
