"""Pluggable inference backends: deterministic oracles for verification and a
remote client speaking a length-delimited JSON wire protocol.

Oracles resolve each request back to its (doc, event, role) through ids in
the request metadata and answer from gold annotations, so the full pipeline's
perfect-score behavior is checkable without a trained model.
"""
from __future__ import annotations

import hashlib
import json
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

from .corpus import Corpus, mark_trigger
from .qa import QAConfig
from .resources import Ontology
from .templates import parse_template, render_filled

GOLD_MASS = 0.99  # start/end probability placed on the gold answer token


class BackendError(RuntimeError):
    pass


class TransportError(BackendError):
    """Remote transport failure; carries the index of the offending request."""

    def __init__(self, message: str, request_index: Optional[int] = None):
        super().__init__(message)
        self.request_index = request_index


@dataclass(frozen=True)
class GenerationRequest:
    input_text: str
    max_new_tokens: int = 512
    beam_size: int = 5
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")


@dataclass(frozen=True)
class GenerationResponse:
    output_text: str


@dataclass(frozen=True)
class SpanScoringRequest:
    input_text: str
    metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SpanScoringResponse:
    start_probs: tuple[float, ...]
    end_probs: tuple[float, ...]
    token_offsets: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "gold-oracle" | "noisy-oracle" | "remote"
    max_concurrency: int = 1
    seed: Optional[int] = None
    endpoint: str = ""
    drop_prob: float = 0.0

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be positive")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint address")


def validate_span_response(resp: SpanScoringResponse, tol: float = 1e-6) -> None:
    L = len(resp.start_probs)
    if len(resp.end_probs) != L or len(resp.token_offsets) != L:
        raise BackendError("span response vectors/offsets have mismatched lengths")
    for name, vec in (("start_probs", resp.start_probs), ("end_probs", resp.end_probs)):
        total = sum(vec)
        if abs(total - 1.0) > tol:
            raise BackendError(f"{name} sums to {total}, not 1 within {tol}")
    for prev, cur in zip(resp.token_offsets, resp.token_offsets[1:]):
        if cur[0] < prev[0]:
            raise BackendError("token_offsets not monotone nondecreasing")


class Backend(Protocol):
    descriptor: BackendDescriptor

    def generate(self, requests: Sequence[GenerationRequest]) -> list[GenerationResponse]: ...

    def score_spans(self, requests: Sequence[SpanScoringRequest]) -> list[SpanScoringResponse]: ...


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

class GoldOracleBackend:
    """Answers every request from gold annotations.

    TI generation returns render_filled on the gold fills. QA span scoring
    puts GOLD_MASS on the (first) gold argument's token and the remainder on
    the null position; for roles with multiple gold arguments this oracle is
    exact only for the first one -- product scoring cannot separate crossing
    spans of equal score.
    """

    def __init__(self, corpus: Corpus, ontology: Ontology, qa_config: QAConfig = QAConfig()):
        self.corpus = corpus
        self.ontology = ontology
        self.qa_config = qa_config
        self.descriptor = BackendDescriptor(kind="gold-oracle", max_concurrency=64)
        self._index = {
            (d.doc_id, e.event_id): (d, e) for d in corpus.documents for e in d.events
        }

    def _resolve(self, metadata: Mapping[str, str]):
        key = (metadata.get("doc_id", ""), metadata.get("event_id", ""))
        if key not in self._index:
            raise BackendError(f"request id {key} not found in corpus {self.corpus.dataset_id!r}")
        return self._index[key]

    def _gold_fills(self, doc, event) -> dict[str, tuple[str, ...]]:
        etype = self.ontology.get(event.event_type)
        fills: dict[str, list[str]] = {r.name: [] for r in etype.roles}
        for a in event.arguments:
            fills.setdefault(a.role, []).append(a.text)
        return {k: tuple(v) for k, v in fills.items()}

    def generate(self, requests: Sequence[GenerationRequest]) -> list[GenerationResponse]:
        out = []
        for req in requests:
            doc, event = self._resolve(req.metadata)
            etype = self.ontology.get(event.event_type)
            ast = parse_template(etype.template)
            out.append(GenerationResponse(output_text=render_filled(ast, self._gold_fills(doc, event))))
        return out

    def score_spans(self, requests: Sequence[SpanScoringRequest]) -> list[SpanScoringResponse]:
        out = []
        for req in requests:
            doc, event = self._resolve(req.metadata)
            role = req.metadata.get("role", "")
            gold = [a for a in event.arguments if a.role == role and a.span is not None]
            if self._dropped(req.metadata, len(gold)):
                gold = []
            if not gold:
                out.append(
                    SpanScoringResponse(start_probs=(1.0,), end_probs=(1.0,), token_offsets=((0, 0),))
                )
                continue
            arg = gold[0]
            _, omap = mark_trigger(doc, event, self.qa_config.open_marker, self.qa_config.close_marker)
            ms, me = omap.span_to_marked(arg.span.start, arg.span.end)
            out.append(
                SpanScoringResponse(
                    start_probs=(1.0 - GOLD_MASS, GOLD_MASS),
                    end_probs=(1.0 - GOLD_MASS, GOLD_MASS),
                    token_offsets=((0, 0), (ms, me)),
                )
            )
        return out

    def _dropped(self, metadata: Mapping[str, str], n_gold: int) -> bool:
        return False


class NoisyOracleBackend(GoldOracleBackend):
    """Gold oracle that independently drops each gold argument with a fixed
    probability. Decisions are a pure function of (seed, doc, event, role,
    index), so outputs are identical across runs and call orders."""

    def __init__(
        self,
        corpus: Corpus,
        ontology: Ontology,
        drop_prob: float,
        seed: int = 0,
        qa_config: QAConfig = QAConfig(),
    ):
        super().__init__(corpus, ontology, qa_config)
        if not 0.0 <= drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        self.drop_prob = drop_prob
        self.seed = seed
        self.descriptor = BackendDescriptor(
            kind="noisy-oracle", max_concurrency=64, seed=seed, drop_prob=drop_prob
        )

    def _keep(self, *key_parts) -> bool:
        digest = hashlib.sha256(":".join(str(p) for p in (self.seed, *key_parts)).encode()).digest()
        u = int.from_bytes(digest[:8], "big") / 2**64
        return u >= self.drop_prob

    def _gold_fills(self, doc, event) -> dict[str, tuple[str, ...]]:
        full = super()._gold_fills(doc, event)
        out = {}
        for role, args in full.items():
            out[role] = tuple(
                a for i, a in enumerate(args) if self._keep(doc.doc_id, event.event_id, role, i)
            )
        return out

    def score_spans(self, requests: Sequence[SpanScoringRequest]) -> list[SpanScoringResponse]:
        out = []
        for req in requests:
            doc, event = self._resolve(req.metadata)
            role = req.metadata.get("role", "")
            if self._keep(doc.doc_id, event.event_id, role, 0):
                out.extend(super().score_spans([req]))
            else:
                out.append(
                    SpanScoringResponse(start_probs=(1.0,), end_probs=(1.0,), token_offsets=((0, 0),))
                )
        return out


class CannedReplyBackend:
    """Fixed generation outputs keyed by request metadata id (or positional).
    Used for LLM-protocol tests and offline reply replay."""

    def __init__(self, replies: Mapping[str, str] | Sequence[str], key: str = "request_id"):
        self.replies = replies
        self.key = key
        self.descriptor = BackendDescriptor(kind="gold-oracle", max_concurrency=64)

    def generate(self, requests: Sequence[GenerationRequest]) -> list[GenerationResponse]:
        out = []
        for i, req in enumerate(requests):
            if isinstance(self.replies, Mapping):
                reply = self.replies[req.metadata[self.key]]
            else:
                reply = self.replies[i]
            out.append(GenerationResponse(output_text=reply))
        return out

    def score_spans(self, requests):
        raise BackendError("canned-reply backend does not score spans")


# ---------------------------------------------------------------------------
# Wire protocol
# ---------------------------------------------------------------------------
#
# Frames are a 4-byte big-endian unsigned length followed by a UTF-8 JSON
# body. Request: {"op": "generate"|"score_spans", "requests": [...]}.
# Response: {"responses": [...], "error": null | {"message": ...}}.

_LEN = struct.Struct(">I")


def send_frame(sock: socket.socket, body: dict) -> None:
    data = json.dumps(body).encode("utf-8")
    sock.sendall(_LEN.pack(len(data)) + data)


def recv_frame(sock: socket.socket) -> dict:
    header = _recv_exact(sock, _LEN.size)
    (length,) = _LEN.unpack(header)
    return json.loads(_recv_exact(sock, length).decode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def generation_request_to_dict(req: GenerationRequest) -> dict:
    return {
        "input_text": req.input_text,
        "max_new_tokens": req.max_new_tokens,
        "beam_size": req.beam_size,
        "metadata": dict(req.metadata),
    }


def generation_request_from_dict(raw: dict) -> GenerationRequest:
    return GenerationRequest(
        input_text=raw["input_text"],
        max_new_tokens=raw.get("max_new_tokens", 512),
        beam_size=raw.get("beam_size", 5),
        metadata=raw.get("metadata", {}),
    )


def span_request_to_dict(req: SpanScoringRequest) -> dict:
    return {"input_text": req.input_text, "metadata": dict(req.metadata)}


def span_request_from_dict(raw: dict) -> SpanScoringRequest:
    return SpanScoringRequest(input_text=raw["input_text"], metadata=raw.get("metadata", {}))


def span_response_to_dict(resp: SpanScoringResponse) -> dict:
    return {
        "start_probs": list(resp.start_probs),
        "end_probs": list(resp.end_probs),
        "token_offsets": [list(t) for t in resp.token_offsets],
    }


def span_response_from_dict(raw: dict) -> SpanScoringResponse:
    return SpanScoringResponse(
        start_probs=tuple(raw["start_probs"]),
        end_probs=tuple(raw["end_probs"]),
        token_offsets=tuple((t[0], t[1]) for t in raw["token_offsets"]),
    )


class RemoteBackend:
    """Client for a service speaking the wire protocol. Requests are
    idempotent; transient transport failures are retried."""

    def __init__(
        self,
        endpoint: str,
        max_concurrency: int = 8,
        timeout: float = 60.0,
        retries: int = 2,
        retry_delay: float = 0.2,
    ):
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
        self.host = host
        self.port = int(port)
        self.timeout = timeout
        self.retries = retries
        self.retry_delay = retry_delay
        self.descriptor = BackendDescriptor(
            kind="remote", max_concurrency=max_concurrency, endpoint=endpoint
        )

    def _call(self, body: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                    send_frame(sock, body)
                    reply = recv_frame(sock)
                if reply.get("error"):
                    err = reply["error"]
                    raise TransportError(
                        err.get("message", "remote error"), err.get("request_index")
                    )
                return reply
            except (OSError, json.JSONDecodeError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.retry_delay)
        raise TransportError(f"remote call failed after {self.retries + 1} attempts: {last_exc}")

    def generate(self, requests: Sequence[GenerationRequest]) -> list[GenerationResponse]:
        reply = self._call(
            {"op": "generate", "requests": [generation_request_to_dict(r) for r in requests]}
        )
        return [GenerationResponse(output_text=r["output_text"]) for r in reply["responses"]]

    def score_spans(self, requests: Sequence[SpanScoringRequest]) -> list[SpanScoringResponse]:
        reply = self._call(
            {"op": "score_spans", "requests": [span_request_to_dict(r) for r in requests]}
        )
        out = []
        for r in reply["responses"]:
            resp = span_response_from_dict(r)
            validate_span_response(resp)
            out.append(resp)
        return out


class _BackendRequestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        try:
            body = recv_frame(self.request)
        except (TransportError, json.JSONDecodeError):
            return
        backend = self.server.backend  # type: ignore[attr-defined]
        try:
            op = body.get("op")
            if op == "generate":
                reqs = [generation_request_from_dict(r) for r in body["requests"]]
                responses = [{"output_text": r.output_text} for r in backend.generate(reqs)]
            elif op == "score_spans":
                reqs = [span_request_from_dict(r) for r in body["requests"]]
                responses = [span_response_to_dict(r) for r in backend.score_spans(reqs)]
            else:
                send_frame(self.request, {"responses": [], "error": {"message": f"unknown op {op!r}"}})
                return
            send_frame(self.request, {"responses": responses, "error": None})
        except Exception as exc:  # protocol-level error body, never a dropped connection
            send_frame(self.request, {"responses": [], "error": {"message": str(exc)}})


class BackendServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _BackendRequestHandler)
        self.backend = backend

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def make_backend(
    descriptor: BackendDescriptor,
    corpus: Optional[Corpus] = None,
    ontology: Optional[Ontology] = None,
    qa_config: QAConfig = QAConfig(),
):
    """Instantiate a backend from its descriptor. Oracles require the target
    corpus and ontology."""
    if descriptor.kind == "gold-oracle":
        if corpus is None or ontology is None:
            raise ValueError("gold oracle requires corpus and ontology")
        return GoldOracleBackend(corpus, ontology, qa_config)
    if descriptor.kind == "noisy-oracle":
        if corpus is None or ontology is None:
            raise ValueError("noisy oracle requires corpus and ontology")
        return NoisyOracleBackend(
            corpus, ontology, drop_prob=descriptor.drop_prob, seed=descriptor.seed or 0, qa_config=qa_config
        )
    if descriptor.kind == "remote":
        return RemoteBackend(descriptor.endpoint, max_concurrency=descriptor.max_concurrency)
    raise ValueError(f"unknown backend kind {descriptor.kind!r}")
