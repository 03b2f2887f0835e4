"""Socket service speaking the harness wire protocol.

Frames are a 4-byte big-endian unsigned length followed by a UTF-8 JSON
body. Request: {"op": "generate"|"score_spans", "requests": [...]}.
Response: {"responses": [...], "error": null | {"message": ...}}. Request
failures produce protocol-level error bodies, never dropped connections.
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch

from .data import encode_qa
from .models import Seq2SeqModel, SpanScorerModel
from .train import load_checkpoint
from .vocab import tokenize

logger = logging.getLogger(__name__)

_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 0
    ti_checkpoint: Optional[str] = None
    qa_checkpoint: Optional[str] = None
    max_concurrency: int = 8

    def __post_init__(self):
        if self.ti_checkpoint is None and self.qa_checkpoint is None:
            raise ValueError("at least one of ti_checkpoint / qa_checkpoint is required")
        for path in (self.ti_checkpoint, self.qa_checkpoint):
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"checkpoint not found: {path}")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be positive")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> dict:
    (length,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
    return json.loads(_recv_exact(sock, length).decode("utf-8"))


def send_frame(sock: socket.socket, body: dict) -> None:
    data = json.dumps(body).encode("utf-8")
    sock.sendall(_LEN.pack(len(data)) + data)


class ModelRunner:
    """Loaded models plus the per-request inference code."""

    def __init__(self, config: ServiceConfig):
        self.ti_model: Optional[Seq2SeqModel] = None
        self.qa_model: Optional[SpanScorerModel] = None
        if config.ti_checkpoint:
            method, vocab, model = load_checkpoint(config.ti_checkpoint)
            if method != "TI":
                raise ValueError(f"{config.ti_checkpoint} is a {method} checkpoint, expected TI")
            self.ti_model = model
        if config.qa_checkpoint:
            method, vocab, model = load_checkpoint(config.qa_checkpoint)
            if method != "QA":
                raise ValueError(f"{config.qa_checkpoint} is a {method} checkpoint, expected QA")
            self.qa_model = model
        # Inference is single-threaded per request; torch modules are shared
        # read-only, which is safe under no_grad.
        self._lock = threading.Semaphore(config.max_concurrency)

    @torch.no_grad()
    def generate(self, requests: list[dict]) -> list[dict]:
        if self.ti_model is None:
            raise RuntimeError("no TI checkpoint loaded; generate unavailable")
        model = self.ti_model
        vocab = model.vocab
        out = []
        for req in requests:
            text = req["input_text"]
            src = (
                [vocab.bos_id]
                + vocab.encode(t for t, _, _ in tokenize(text))
                + [vocab.eos_id]
            )
            ids = model.greedy_decode(src, max_new_tokens=req.get("max_new_tokens", 128))
            out.append({"output_text": " ".join(vocab.decode(ids))})
        return out

    @torch.no_grad()
    def score_spans(self, requests: list[dict]) -> list[dict]:
        if self.qa_model is None:
            raise RuntimeError("no QA checkpoint loaded; score_spans unavailable")
        model = self.qa_model
        vocab = model.vocab
        out = []
        for req in requests:
            enc = encode_qa(vocab, req["input_text"])
            ids = torch.tensor([enc.ids], dtype=torch.long)
            keep = torch.zeros_like(ids, dtype=torch.bool)
            keep[0, 0] = True
            keep[0, enc.doc_positions] = True
            start_logits, end_logits = model(ids, keep)
            positions = [0] + enc.doc_positions
            out.append(
                {
                    "start_probs": torch.softmax(start_logits[0, positions], dim=-1).tolist(),
                    "end_probs": torch.softmax(end_logits[0, positions], dim=-1).tolist(),
                    "token_offsets": [[0, 0]] + [list(t) for t in enc.token_offsets],
                }
            )
        return out

    def handle(self, body: dict) -> dict:
        with self._lock:
            op = body.get("op")
            if op == "generate":
                return {"responses": self.generate(body.get("requests", [])), "error": None}
            if op == "score_spans":
                return {"responses": self.score_spans(body.get("requests", [])), "error": None}
            return {"responses": [], "error": {"message": f"unknown op {op!r}"}}


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        try:
            body = recv_frame(self.request)
        except (ConnectionError, json.JSONDecodeError):
            return
        runner: ModelRunner = self.server.runner  # type: ignore[attr-defined]
        try:
            reply = runner.handle(body)
        except Exception as exc:
            logger.exception("request failed")
            reply = {"responses": [], "error": {"message": str(exc)}}
        send_frame(self.request, reply)


class ModelServiceServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: ServiceConfig):
        super().__init__((config.host, config.port), _Handler)
        self.runner = ModelRunner(config)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(config: ServiceConfig) -> None:
    server = ModelServiceServer(config)
    logger.info("serving on %s", server.endpoint)
    print(f"listening on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
