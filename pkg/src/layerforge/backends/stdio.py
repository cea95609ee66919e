"""Newline-delimited JSON transport over a subprocess, for air-gapped runs.

The worker reads one request object per line and answers one response object
per line; requests carry the same bodies as the HTTP endpoints plus an
"endpoint" field. Responses are matched to requests by request_id, so a
worker may answer out of order; duplicate responses for an id are dropped.

Run the bundled mock worker with ``python -m layerforge.backends.stdio``.
"""

from __future__ import annotations

import json
import subprocess
import sys
import threading
import uuid
from typing import Optional

import numpy as np

from ..compositor import CanvasSpec
from ..errors import BackendError, TransportError
from .core import (
    BackendSuite,
    EmbeddingVector,
    matte_to_png_b64,
    png_b64_to_matte,
    png_b64_to_rgb,
    rgb_to_png_b64,
)


def handle_request(suite: BackendSuite, request: dict) -> dict:
    endpoint = request.get("endpoint")
    rid = request.get("request_id")
    if endpoint == "/v1/generate":
        image = suite.generate.generate(
            request["prompt"],
            CanvasSpec(int(request["width"]), int(request["height"])),
            seed=int(request.get("seed", 0)),
        )
        return {"request_id": rid, "image_png_b64": rgb_to_png_b64(image)}
    if endpoint == "/v1/matte":
        matte = suite.matte.matte(png_b64_to_rgb(request["image_png_b64"]))
        return {"request_id": rid, "matte_png_b64": matte_to_png_b64(matte)}
    if endpoint == "/v1/embed":
        if request.get("kind") == "text":
            vec = suite.embed.embed_text(request["text"])
        else:
            vec = suite.embed.embed_image(png_b64_to_rgb(request["image_png_b64"]))
        return {"request_id": rid, "vector": vec.values.tolist()}
    if endpoint == "/v1/recaption":
        text = suite.recaption.recaption(
            png_b64_to_rgb(request["image_png_b64"]), request["instruction"]
        )
        return {"request_id": rid, "text": text}
    return {"request_id": rid, "error": f"unknown endpoint {endpoint!r}"}


def worker_main(argv: Optional[list[str]] = None) -> int:
    """Serve the mock suite over stdin/stdout."""
    import argparse

    from .mock import make_mock_suite

    parser = argparse.ArgumentParser(prog="layerforge-stdio-worker")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    suite = make_mock_suite(seed=args.seed)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            response = handle_request(suite, json.loads(line))
        except Exception as exc:  # worker must never die mid-stream
            response = {"request_id": None, "error": str(exc)}
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()
    return 0


class StdioTransport:
    """Client side of the stdio protocol; serializes writes, matches by id."""

    def __init__(self, command: list[str]):
        self.command = command
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        self._lock = threading.Lock()
        self._pending: dict[str, dict] = {}

    def close(self):
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def request(self, body: dict) -> dict:
        rid = body.setdefault("request_id", uuid.uuid4().hex)
        with self._lock:
            if self._proc.poll() is not None:
                raise TransportError("stdio worker exited")
            self._proc.stdin.write(json.dumps(body) + "\n")
            self._proc.stdin.flush()
            while rid not in self._pending:
                line = self._proc.stdout.readline()
                if not line:
                    raise TransportError("stdio worker closed the stream")
                response = json.loads(line)
                got = response.get("request_id")
                if got is None:
                    raise BackendError(f"worker error: {response.get('error')}")
                if got in self._pending:
                    continue  # duplicate response, drop it
                self._pending[got] = response
            response = self._pending.pop(rid)
        if "error" in response:
            raise BackendError(response["error"])
        return response


class _StdioGenerate:
    def __init__(self, transport: StdioTransport):
        self._t = transport

    def generate(self, prompt: str, canvas: CanvasSpec, seed: int = 0) -> np.ndarray:
        body = self._t.request(
            {
                "endpoint": "/v1/generate",
                "prompt": prompt,
                "width": canvas.width,
                "height": canvas.height,
                "seed": seed,
            }
        )
        return png_b64_to_rgb(body["image_png_b64"])


class _StdioMatte:
    def __init__(self, transport: StdioTransport):
        self._t = transport

    def matte(self, image: np.ndarray) -> np.ndarray:
        body = self._t.request({"endpoint": "/v1/matte", "image_png_b64": rgb_to_png_b64(image)})
        return png_b64_to_matte(body["matte_png_b64"])


class _StdioEmbed:
    def __init__(self, transport: StdioTransport):
        self._t = transport

    def embed_image(self, image: np.ndarray) -> EmbeddingVector:
        arr = np.asarray(image, dtype=np.uint8)
        if arr.ndim == 3 and arr.shape[2] == 4:
            arr = arr[:, :, :3]
        body = self._t.request(
            {"endpoint": "/v1/embed", "kind": "image", "image_png_b64": rgb_to_png_b64(arr)}
        )
        return EmbeddingVector.normalized(np.asarray(body["vector"]))

    def embed_text(self, text: str) -> EmbeddingVector:
        body = self._t.request({"endpoint": "/v1/embed", "kind": "text", "text": text})
        return EmbeddingVector.normalized(np.asarray(body["vector"]))


class _StdioRecaption:
    def __init__(self, transport: StdioTransport):
        self._t = transport

    def recaption(self, image: np.ndarray, instruction: str) -> str:
        if not instruction:
            raise ValueError("recaption instruction must be non-empty")
        body = self._t.request(
            {
                "endpoint": "/v1/recaption",
                "image_png_b64": rgb_to_png_b64(image),
                "instruction": instruction,
            }
        )
        return body["text"]


def stdio_suite(command: list[str]) -> tuple[BackendSuite, StdioTransport]:
    """All four roles multiplexed over one worker process.

    Returns the suite and the transport; close the transport when done.
    """
    transport = StdioTransport(command)
    suite = BackendSuite(
        generate=_StdioGenerate(transport),
        matte=_StdioMatte(transport),
        embed=_StdioEmbed(transport),
        recaption=_StdioRecaption(transport),
        source_label="generated",
    )
    return suite, transport


if __name__ == "__main__":
    raise SystemExit(worker_main())
