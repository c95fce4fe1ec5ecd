"""Length-delimited JSON wire protocol over TCP.

Framing: each message is an ASCII decimal byte count terminated by ``\n``,
followed by exactly that many bytes of UTF-8 JSON. Requests carry a "type"
field: decide, ingest_reward, health, metrics (schema in docs/FORMATS.md).
Malformed input yields {"type": "error", ...} and keeps the connection open.
"""

import json
import socket
import socketserver
import threading
import time

import numpy as np

from .service import DecisionRequest, ServiceError

MAX_MESSAGE = 1 << 20


class ProtocolError(ValueError):
    pass


def send_message(sock_file, payload):
    body = json.dumps(payload).encode("utf-8")
    sock_file.write(str(len(body)).encode("ascii") + b"\n" + body)
    sock_file.flush()


def recv_message(sock_file):
    header = sock_file.readline(32)
    if not header:
        return None  # connection closed
    try:
        length = int(header.decode("ascii").strip())
    except ValueError:
        raise ProtocolError(f"bad length header {header!r}")
    if not 0 <= length <= MAX_MESSAGE:
        raise ProtocolError(f"message length {length} out of bounds")
    body = sock_file.read(length)
    if len(body) != length:
        raise ProtocolError("truncated message body")
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"message is not valid JSON: {exc}")


def _handle_request(service, msg):
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("request must be a JSON object with a 'type' field")
    kind = msg["type"]
    if kind == "health":
        return {"type": "health", "status": "ready", "model_key": service.model_key}
    if kind == "metrics":
        return {"type": "metrics", **service.metrics()}
    if kind == "ingest_reward":
        service.ingest_external_reward(
            msg["user_id"], dict(msg["updates"]), realized=msg.get("realized")
        )
        return {"type": "ok"}
    if kind == "decide":
        try:
            request = DecisionRequest(
                user_id=str(msg["user_id"]),
                state=np.asarray(msg["state"], dtype=np.float64),
                eas=np.asarray(msg["eas"], dtype=np.uint8),
                timestamp_ms=int(msg["timestamp_ms"]),
                mode=msg.get("mode"),
                alphas=msg.get("alphas"),
                rtg_override=msg.get("rtg_override"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad decide request: {exc}")
        response = service.decide(request)
        return {"type": "decision", "user_id": msg["user_id"], **response.to_wire()}
    raise ProtocolError(f"unknown request type {kind!r}")


class DecisionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service, host="127.0.0.1", port=0):
        self.service = service
        super().__init__((host, port), _Handler)

    @property
    def address(self):
        return self.server_address

    def serve_in_thread(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                msg = recv_message(self.rfile)
            except ProtocolError as exc:
                send_message(self.wfile, {"type": "error", "error": str(exc)})
                continue
            if msg is None:
                return
            try:
                reply = _handle_request(self.server.service, msg)
            except (ProtocolError, ServiceError) as exc:
                reply = {"type": "error", "error": str(exc)}
            except Exception as exc:  # keep the connection alive on bugs too
                reply = {"type": "error", "error": f"internal: {exc!r}"}
            try:
                send_message(self.wfile, reply)
            except (BrokenPipeError, ConnectionResetError):
                return


class ServiceClient:
    """Blocking client with one persistent connection."""

    def __init__(self, host, port, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")
        self.wfile = self.sock.makefile("wb")

    def request(self, payload):
        send_message(self.wfile, payload)
        reply = recv_message(self.rfile)
        if reply is None:
            raise ProtocolError("server closed the connection")
        return reply

    def close(self):
        self.rfile.close()
        self.wfile.close()
        self.sock.close()


def measure_throughput(host, port, *, n_requests, n_users, state_dim,
                       timestamp_step_ms=60_000):
    """Sequential decide calls over the wire; reports sustained decisions/sec
    and latency percentiles. Measurement only, nothing asserted."""
    client = ServiceClient(host, port)
    rng = np.random.default_rng(1234)
    latencies = []
    t_start = time.perf_counter()
    for i in range(n_requests):
        uid = f"bench{i % n_users:04d}"
        payload = {
            "type": "decide",
            "user_id": uid,
            "state": rng.random(state_dim).tolist(),
            "eas": [1, 1, 1],
            "timestamp_ms": (i // n_users + 1) * timestamp_step_ms,
        }
        t0 = time.perf_counter()
        reply = client.request(payload)
        latencies.append((time.perf_counter() - t0) * 1e3)
        if reply.get("type") != "decision":
            raise ProtocolError(f"unexpected reply {reply}")
    elapsed = time.perf_counter() - t_start
    client.close()
    lat = np.asarray(latencies)
    return {
        "requests": n_requests,
        "elapsed_s": round(elapsed, 3),
        "decisions_per_sec": round(n_requests / elapsed, 1),
        "p50_ms": round(float(np.percentile(lat, 50)), 3),
        "p99_ms": round(float(np.percentile(lat, 99)), 3),
    }
