"""FastAPI app exposing a BackendSuite over the wire contract.

Lets any process that can speak JSON-over-POST serve the model roles; also
used in tests to exercise the HTTP clients in-process.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..compositor import CanvasSpec
from ..errors import LayerForgeError
from .core import BackendSuite, matte_to_png_b64, png_b64_to_rgb, rgb_to_png_b64


def make_backend_app(suite: BackendSuite) -> FastAPI:
    app = FastAPI(title="layerforge model backends")

    @app.exception_handler(LayerForgeError)
    async def _domain_error(request, exc):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.post("/v1/generate")
    def generate(body: dict):
        image = suite.generate.generate(
            body["prompt"],
            CanvasSpec(int(body["width"]), int(body["height"])),
            seed=int(body.get("seed", 0)),
        )
        return {"request_id": body.get("request_id"), "image_png_b64": rgb_to_png_b64(image)}

    @app.post("/v1/matte")
    def matte(body: dict):
        image = png_b64_to_rgb(body["image_png_b64"])
        return {"request_id": body.get("request_id"), "matte_png_b64": matte_to_png_b64(suite.matte.matte(image))}

    @app.post("/v1/embed")
    def embed(body: dict):
        if body.get("kind") == "text":
            vec = suite.embed.embed_text(body["text"])
        else:
            vec = suite.embed.embed_image(png_b64_to_rgb(body["image_png_b64"]))
        return {"request_id": body.get("request_id"), "vector": vec.values.tolist()}

    @app.post("/v1/recaption")
    def recaption(body: dict):
        image = png_b64_to_rgb(body["image_png_b64"])
        return {"request_id": body.get("request_id"), "text": suite.recaption.recaption(image, body["instruction"])}

    return app
