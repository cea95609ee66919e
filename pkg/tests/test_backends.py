import json
import sys
import threading

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from layerforge.backends import (
    BackendConfig,
    ConcurrencyGate,
    EmbeddingVector,
    HttpEmbedBackend,
    HttpGenerateBackend,
    MockEmbedBackend,
    MockGenerateBackend,
    MockMatteBackend,
    MockRecaptionBackend,
    PlantedArray,
    make_backend_app,
    make_mock_suite,
    stdio_suite,
)
from layerforge.backends.mock import BLANK_MARKER, FAIL_MARKER
from layerforge.compositor import CanvasSpec
from layerforge.errors import BackendError, ConfigError, TransportError
from layerforge.prompting import GRAY_RGB


def test_backend_config_invariants():
    with pytest.raises(ConfigError):
        BackendConfig(role="generate", endpoint="x", timeout=0)
    with pytest.raises(ConfigError):
        BackendConfig(role="generate", endpoint="x", concurrency_limit=0)
    with pytest.raises(ConfigError):
        BackendConfig(role="paint", endpoint="x")


def test_embedding_vector_norm_contract():
    v = EmbeddingVector.normalized(np.arange(1, 5, dtype=np.float64))
    assert abs(np.linalg.norm(v.values) - 1.0) < 1e-6
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([1.0, 1.0]))


def test_mock_generator_is_deterministic():
    gen = MockGenerateBackend(seed=3)
    canvas = CanvasSpec(64, 64)
    a = gen.generate("a red fox", canvas)
    b = gen.generate("a red fox", canvas)
    assert np.array_equal(a, b)
    c = gen.generate("a blue fox", canvas)
    assert not np.array_equal(a, c)
    assert a.shape == (64, 64, 3)


def test_mock_generator_honors_requested_dims():
    img = MockGenerateBackend().generate("anything", CanvasSpec(1024, 512))
    assert img.shape == (512, 1024, 3)


def test_mock_generator_markers():
    gen = MockGenerateBackend()
    blank = gen.generate(f"scene {BLANK_MARKER}", CanvasSpec(32, 32))
    assert np.array_equal(np.unique(blank.reshape(-1, 3), axis=0), [list(GRAY_RGB)])
    with pytest.raises(BackendError):
        gen.generate(f"scene {FAIL_MARKER}", CanvasSpec(32, 32))


def test_mock_matte_uniform_gray_is_zero():
    img = np.full((16, 16, 3), GRAY_RGB, dtype=np.uint8)
    matte = MockMatteBackend().matte(img)
    assert matte.shape == (16, 16)
    assert matte.max() == 0.0


def test_mock_matte_disk_coverage_close_to_analytic():
    gen = MockGenerateBackend(seed=1, shape="disk", radius_fraction=0.6)
    img = gen.generate("a disk", CanvasSpec(128, 128))
    matte = MockMatteBackend().matte(img)
    analytic = np.pi * (0.6 * 128 / 2) ** 2 / (128 * 128)
    coverage = matte.mean()
    assert abs(coverage - analytic) / analytic < 0.03


def test_mock_embed_is_deterministic_unit_norm():
    embed = MockEmbedBackend(dim=64, seed=5)
    a = embed.embed_text("hello")
    b = embed.embed_text("hello")
    assert a == b
    assert abs(np.linalg.norm(a.values) - 1.0) < 1e-6
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    assert embed.embed_image(img) == embed.embed_image(img)


def test_mock_embed_planted_cosines():
    embed = MockEmbedBackend(dim=128, seed=0, planted=True)
    anchor = np.ones(128) / np.sqrt(128)
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    good = embed.embed_image(PlantedArray(img, "good 1"))
    bad = embed.embed_image(PlantedArray(img, "bad 1"))
    assert good.values @ anchor == pytest.approx(0.8, abs=1e-9)
    assert bad.values @ anchor == pytest.approx(-0.8, abs=1e-9)
    text = embed.embed_text("shared prompt 1")
    assert text.values @ anchor == pytest.approx(0.9, abs=1e-9)


def test_mock_recaption_style_contract():
    rec = MockRecaptionBackend()
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    out = rec.recaption(img, 'blah blah starting with "This is a ink style image." blah')
    assert out.startswith("This is a ink style image.")
    assert len(out.split()) <= 70
    with pytest.raises(ValueError):
        rec.recaption(img, "")


def test_concurrency_gate_caps_in_flight():
    gate = ConcurrencyGate(3)
    barrier = threading.Barrier(8, timeout=5)

    def work():
        try:
            barrier.wait()
        except threading.BrokenBarrierError:
            pass
        with gate:
            pass

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert gate.max_observed <= 3


def _bridge_transport(app):
    """httpx transport that forwards requests into a FastAPI app in-process."""
    client = TestClient(app)

    def handler(request: httpx.Request) -> httpx.Response:
        r = client.post(
            request.url.path,
            content=request.content,
            headers={"content-type": "application/json"},
        )
        return httpx.Response(r.status_code, content=r.content)

    return httpx.MockTransport(handler)


def test_http_round_trip_through_wire_protocol():
    suite = make_mock_suite(seed=2)
    transport = _bridge_transport(make_backend_app(suite))
    cfg = BackendConfig(role="generate", endpoint="http://backends", backoff_base=0.0)
    client = HttpGenerateBackend(cfg, transport=transport)
    canvas = CanvasSpec(48, 32)
    over_wire = client.generate("a fox", canvas, seed=9)
    local = suite.generate.generate("a fox", canvas, seed=9)
    assert np.array_equal(over_wire, local)

    embed_client = HttpEmbedBackend(
        BackendConfig(role="embed", endpoint="http://backends", backoff_base=0.0),
        transport=transport,
    )
    v = embed_client.embed_text("hello")
    assert v == suite.embed.embed_text("hello")


def test_http_retries_replay_same_request_id_then_succeed():
    suite = make_mock_suite()
    app_client = TestClient(make_backend_app(suite))
    seen_ids = []
    failures = {"left": 2}

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        seen_ids.append(body["request_id"])
        if failures["left"] > 0:
            failures["left"] -= 1
            raise httpx.ConnectError("backend down")
        r = app_client.post(request.url.path, content=request.content,
                            headers={"content-type": "application/json"})
        return httpx.Response(r.status_code, content=r.content)

    cfg = BackendConfig(role="generate", endpoint="http://b", max_retries=4, backoff_base=0.0)
    client = HttpGenerateBackend(cfg, transport=httpx.MockTransport(handler))
    img = client.generate("a fox", CanvasSpec(16, 16))
    assert img.shape == (16, 16, 3)
    assert len(seen_ids) == 3
    assert len(set(seen_ids)) == 1  # idempotent replay


def test_http_gives_up_after_max_retries():
    calls = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        calls["n"] += 1
        raise httpx.ConnectError("still down")

    cfg = BackendConfig(role="generate", endpoint="http://b", max_retries=3, backoff_base=0.0)
    client = HttpGenerateBackend(cfg, transport=httpx.MockTransport(handler))
    with pytest.raises(TransportError):
        client.generate("a fox", CanvasSpec(16, 16))
    assert calls["n"] == 3


def test_http_non_200_is_backend_error_with_body_excerpt():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500, text="matting model exploded")

    cfg = BackendConfig(role="matte", endpoint="http://b", max_retries=1, backoff_base=0.0)
    client = HttpGenerateBackend(cfg, transport=httpx.MockTransport(handler))
    with pytest.raises(BackendError, match="matting model exploded"):
        client.generate("x", CanvasSpec(16, 16))


def test_http_client_respects_concurrency_limit():
    def slow_handler(request: httpx.Request) -> httpx.Response:
        import time

        time.sleep(0.02)
        body = json.loads(request.content)
        return httpx.Response(
            200, json={"request_id": body["request_id"], "vector": [1.0, 0.0, 0.0]}
        )

    cfg = BackendConfig(role="embed", endpoint="http://b", concurrency_limit=2, backoff_base=0.0)
    client = HttpEmbedBackend(cfg, transport=httpx.MockTransport(slow_handler))
    threads = [
        threading.Thread(target=lambda i=i: client.embed_text(f"t{i}")) for i in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert client.gate.max_observed <= 2


def test_http_suite_from_config(tmp_path):
    cfg = {
        role: {"endpoint": f"http://{role}.local", "timeout": 5.0, "max_retries": 2}
        for role in ("generate", "matte", "embed", "recaption")
    }
    path = tmp_path / "backends.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    from layerforge.backends import http_suite_from_config

    suite = http_suite_from_config(path)
    assert suite.generate.config.endpoint == "http://generate.local"
    assert suite.matte.config.max_retries == 2


@pytest.mark.skipif(
    "LAYERFORGE_RECAPTION_URL" not in __import__("os").environ,
    reason="no live recaption backend configured",
)
def test_live_recaption_echo():
    from layerforge.backends import BackendConfig, HttpRecaptionBackend

    client = HttpRecaptionBackend(BackendConfig.from_env("recaption"))
    img = np.full((16, 16, 3), 128, dtype=np.uint8)
    text = client.recaption(img, 'Describe briefly, starting with "This is a ink style image."')
    assert text
    assert len(text.split()) <= 70


def test_stdio_worker_round_trip():
    suite, transport = stdio_suite([sys.executable, "-m", "layerforge.backends.stdio", "--seed", "4"])
    try:
        local = make_mock_suite(seed=4)
        canvas = CanvasSpec(32, 32)
        assert np.array_equal(
            suite.generate.generate("a kite", canvas), local.generate.generate("a kite", canvas)
        )
        matte = suite.matte.matte(local.generate.generate("a kite", canvas))
        assert matte.shape == (32, 32)
        assert suite.embed.embed_text("hi") == local.embed.embed_text("hi")
    finally:
        transport.close()


def test_stdio_duplicate_responses_are_deduplicated():
    # a worker that answers every request twice
    script = (
        "import sys, json\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    resp = json.dumps({'request_id': req['request_id'], 'vector': [1.0] + [0.0]*3})\n"
        "    sys.stdout.write(resp + '\\n')\n"
        "    sys.stdout.write(resp + '\\n')\n"
        "    sys.stdout.flush()\n"
    )
    suite, transport = stdio_suite([sys.executable, "-c", script])
    try:
        v1 = suite.embed.embed_text("a")
        v2 = suite.embed.embed_text("b")  # would wedge if the duplicate stayed queued
        assert v1 == v2
    finally:
        transport.close()
