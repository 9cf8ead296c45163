"""Wire protocol for serving next-token distributions from another process.

Messages are newline-delimited JSON objects, UTF-8, one per line:

    handshake request  {"op": "hello", "version": 1, "vocab_hash": "<hex>"}
    handshake response {"op": "hello", "version": 1, "vocab_size": <int>,
                        "vocab_hash": "<hex>"}
    scoring request    {"op": "dist", "source": [ids], "prefix": [ids]}
    scoring response   {"op": "dist", "logprobs": [floats]}
    error              {"op": "error", "message": "<text>"}

Log-space payloads (base e) avoid underflow; the client validates that the
exponentiated vector is non-negative and sums to 1 within 1e-6, renormalizes
inside that tolerance, and refuses anything worse.  The vocabulary contract
is a SHA-256 hash over the canonical vocabulary file bytes.
"""

from __future__ import annotations

import hashlib
import json
import selectors
import socket
import subprocess
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bpe import Vocabulary
from .models import ConditionalLM

PROTOCOL_VERSION = 1
NEG_INF_SENTINEL = -1e30  # JSON-safe stand-in for log(0)


class BridgeError(RuntimeError):
    """Protocol violation, timeout, or transport failure."""


def vocab_hash(vocab: Vocabulary) -> str:
    """SHA-256 over the canonical vocabulary file bytes (token TAB id lines)."""
    text = "".join(f"{tok}\t{i}\n" for i, tok in enumerate(vocab.id_to_token))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def vocab_file_hash(path) -> str:
    from pathlib import Path

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class BridgeEndpoint:
    """Where and how to reach a model server.

    Exactly one of `command` (child process speaking the protocol on its
    standard streams) or `host`/`port` (TCP) must be set.
    """

    command: tuple[str, ...] | None = None
    host: str | None = None
    port: int | None = None
    timeout_ms: int = 10_000

    def __post_init__(self):
        if (self.command is None) == (self.host is None):
            raise BridgeError("endpoint needs either a command or a host/port")


class _StdioTransport:
    def __init__(self, command, timeout_ms):
        self.proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
        self.timeout = timeout_ms / 1000.0
        self.selector = selectors.DefaultSelector()
        self.selector.register(self.proc.stdout, selectors.EVENT_READ)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise BridgeError(f"server process is gone: {e}") from e

    def recv_line(self) -> str:
        if not self.selector.select(self.timeout):
            raise BridgeError(f"timeout after {self.timeout * 1000:.0f} ms waiting for the server")
        line = self.proc.stdout.readline()
        if not line:
            raise BridgeError("server closed its output stream")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host, port, timeout_ms):
        self.sock = socket.create_connection((host, port), timeout=timeout_ms / 1000.0)
        self.sock.settimeout(timeout_ms / 1000.0)
        self._buffer = b""

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as e:
            raise BridgeError(f"send failed: {e}") from e

    def recv_line(self) -> str:
        while b"\n" not in self._buffer:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as e:
                raise BridgeError("timeout waiting for the server") from e
            if not chunk:
                raise BridgeError("server closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        self.sock.close()


class BridgeSession:
    """A handshaken connection; request/response, strictly ordered."""

    def __init__(self, endpoint: BridgeEndpoint, vocab: Vocabulary):
        self.endpoint = endpoint
        self.vocab = vocab
        if endpoint.command is not None:
            self.transport = _StdioTransport(endpoint.command, endpoint.timeout_ms)
        else:
            self.transport = _TcpTransport(endpoint.host, endpoint.port, endpoint.timeout_ms)
        self.vocab_size = len(vocab)
        self.closed = False
        self._handshake()

    def _handshake(self) -> None:
        expected = vocab_hash(self.vocab)
        reply = self._roundtrip(
            {"op": "hello", "version": PROTOCOL_VERSION, "vocab_hash": expected}
        )
        if reply.get("op") != "hello":
            raise BridgeError(f"handshake rejected: {reply}")
        if reply.get("version") != PROTOCOL_VERSION:
            raise BridgeError(f"protocol version mismatch: server speaks {reply.get('version')}")
        if reply.get("vocab_hash") != expected:
            raise BridgeError("vocabulary hash mismatch; refusing to score")
        if reply.get("vocab_size") != self.vocab_size:
            raise BridgeError(
                f"vocabulary size mismatch: server has {reply.get('vocab_size')}, "
                f"client has {self.vocab_size}"
            )

    def _roundtrip(self, message: dict) -> dict:
        self.transport.send_line(json.dumps(message))
        line = self.transport.recv_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as e:
            raise BridgeError(f"malformed server message: {line!r}") from e
        if not isinstance(reply, dict):
            raise BridgeError(f"malformed server message: {line!r}")
        if reply.get("op") == "error":
            raise BridgeError(f"server error: {reply.get('message')}")
        return reply

    def request_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        """One probability vector; validates normalization, renormalizes inside 1e-6."""
        if self.closed:
            raise BridgeError("session is closed")
        reply = self._roundtrip({"op": "dist", "source": list(source), "prefix": list(prefix)})
        logprobs = reply.get("logprobs")
        if reply.get("op") != "dist" or not isinstance(logprobs, list):
            raise BridgeError(f"malformed dist response: {reply}")
        if len(logprobs) != self.vocab_size:
            raise BridgeError(
                f"dist length {len(logprobs)} does not match vocabulary size {self.vocab_size}"
            )
        arr = np.asarray(logprobs, dtype=np.float64)
        probs = np.exp(arr)
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            self.close()
            raise BridgeError("dist response contains invalid probabilities")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-6:
            self.close()
            raise BridgeError(f"dist response sums to {total}, outside tolerance")
        return probs / total

    def request_batch(self, requests: Sequence[tuple[Sequence[int], Sequence[int]]]) -> list[np.ndarray]:
        """Order-preserving batch; any failure fails the whole batch."""
        return [self.request_dist(source, prefix) for source, prefix in requests]

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.transport.close()


def handshake(endpoint: BridgeEndpoint, vocab: Vocabulary) -> BridgeSession:
    """Open a session; raises BridgeError on timeout or contract mismatch."""
    return BridgeSession(endpoint, vocab)


class BridgeModel(ConditionalLM):
    """A ConditionalLM served by a bridge session.

    Deterministic within a session per the protocol contract; distributions
    are cached by (source, prefix) so repeated queries cost one round trip.
    """

    def __init__(self, session: BridgeSession, eos_id: int | None = None):
        self.session = session
        self.vocab_size = session.vocab_size
        self.eos_id = session.vocab.eos_id if eos_id is None else eos_id
        self._cache: dict[tuple, np.ndarray] = {}

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        key = (tuple(source), tuple(prefix))
        cached = self._cache.get(key)
        if cached is None:
            cached = self.session.request_dist(source, prefix)
            self._cache[key] = cached
        return cached


# ---------------------------------------------------------------------------
# Server side: serve any in-process model over the protocol.
# ---------------------------------------------------------------------------


def _dist_logprobs(model: ConditionalLM, source, prefix) -> list[float]:
    probs = model.next_dist(source, prefix)
    with np.errstate(divide="ignore"):
        logs = np.log(probs)
    return [float(x) if np.isfinite(x) else NEG_INF_SENTINEL for x in logs]


def handle_request(line: str, model: ConditionalLM, expected_hash: str) -> str:
    """One protocol message in, one out; malformed input yields an error line."""
    try:
        message = json.loads(line)
        if not isinstance(message, dict):
            raise ValueError("message is not an object")
    except ValueError as e:
        return json.dumps({"op": "error", "message": f"malformed message: {e}"})
    op = message.get("op")
    if op == "hello":
        if message.get("version") != PROTOCOL_VERSION:
            return json.dumps(
                {"op": "error", "message": f"unsupported version {message.get('version')}"}
            )
        if message.get("vocab_hash") != expected_hash:
            return json.dumps({"op": "error", "message": "vocab_hash mismatch"})
        return json.dumps(
            {
                "op": "hello",
                "version": PROTOCOL_VERSION,
                "vocab_size": model.vocab_size,
                "vocab_hash": expected_hash,
            }
        )
    if op == "dist":
        source = message.get("source")
        prefix = message.get("prefix")
        if not isinstance(source, list) or not isinstance(prefix, list):
            return json.dumps({"op": "error", "message": "dist needs source and prefix lists"})
        bad = [t for t in source + prefix if not isinstance(t, int) or not 0 <= t < model.vocab_size]
        if bad:
            return json.dumps({"op": "error", "message": f"token ids out of range: {bad[:5]}"})
        return json.dumps({"op": "dist", "logprobs": _dist_logprobs(model, source, prefix)})
    return json.dumps({"op": "error", "message": f"unknown op {op!r}"})


def serve_stdio(model: ConditionalLM, vocab: Vocabulary, stdin=None, stdout=None) -> None:
    """Serve the protocol on standard streams until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    expected = vocab_hash(vocab)
    for line in stdin:
        line = line.rstrip("\n")
        if not line:
            continue
        stdout.write(handle_request(line, model, expected) + "\n")
        stdout.flush()


def serve_tcp(model: ConditionalLM, vocab: Vocabulary, host: str, port: int, max_sessions=None) -> None:
    """Serve the protocol over TCP, one session at a time."""
    expected = vocab_hash(vocab)
    server = socket.create_server((host, port))
    served = 0
    try:
        while max_sessions is None or served < max_sessions:
            conn, _ = server.accept()
            served += 1
            with conn:
                buffer = b""
                while True:
                    chunk = conn.recv(65536)
                    if not chunk:
                        break
                    buffer += chunk
                    while b"\n" in buffer:
                        line, buffer = buffer.split(b"\n", 1)
                        reply = handle_request(line.decode("utf-8"), model, expected)
                        conn.sendall((reply + "\n").encode("utf-8"))
    finally:
        server.close()


# ---------------------------------------------------------------------------
# Conformance: the checks behind the `serve-check` command.
# ---------------------------------------------------------------------------


def run_conformance(endpoint: BridgeEndpoint, vocab: Vocabulary, probes: int = 50, seed: int = 0):
    """Handshake, normalization, determinism, and error-handling probes.

    Returns a list of (check name, passed, detail) triples.
    """
    from .rng import CounterRng

    results = []

    def check(name, fn):
        try:
            detail = fn()
            results.append((name, True, detail or ""))
        except Exception as e:  # noqa: BLE001 - report, do not crash the suite
            results.append((name, False, str(e)))

    session_box = {}

    def open_session():
        session_box["session"] = handshake(endpoint, vocab)
        return "handshake accepted"

    check("handshake", open_session)
    session = session_box.get("session")
    if session is None:
        return results

    rng = CounterRng(seed)
    v = len(vocab)
    non_special = [i for i in range(v) if i not in (vocab.eos_id, vocab.unk_id)] or [0]

    def normalization():
        for _ in range(probes):
            src = [rng.choice(non_special) for _ in range(rng.randint(0, 4))]
            prefix = [rng.choice(non_special) for _ in range(rng.randint(0, 4))]
            probs = session.request_dist(src, prefix)
            if abs(float(probs.sum()) - 1.0) > 1e-6:
                raise BridgeError(f"sum {probs.sum()} outside tolerance")
            if np.any(probs < 0):
                raise BridgeError("negative probability")
        return f"{probes} random requests normalized"

    check("normalization", normalization)

    def determinism():
        src, prefix = [non_special[0]], [non_special[-1]]
        a = session.request_dist(src, prefix)
        b = session.request_dist(src, prefix)
        if not np.array_equal(a, b):
            raise BridgeError("repeated request returned different distributions")
        return "repeated request identical"

    check("determinism", determinism)

    def batch_order():
        reqs = [([non_special[i % len(non_special)]], []) for i in range(4)]
        batch = session.request_batch(reqs)
        singles = [session.request_dist(s, p) for s, p in reqs]
        for got, want in zip(batch, singles):
            if not np.array_equal(got, want):
                raise BridgeError("batch result differs from sequential requests")
        return "batch preserves order"

    check("batch-order", batch_order)

    def error_handling():
        session.transport.send_line("this is not json")
        raw = session.transport.recv_line()
        message = json.loads(raw)
        if message.get("op") != "error":
            raise BridgeError(f"malformed input not rejected: {raw}")
        # the session must still answer after an error
        session.request_dist([non_special[0]], [])
        return "malformed input rejected, session continues"

    check("error-handling", error_handling)
    session.close()
    return results
