from .core import (
    DEFAULT_EMBED_DIM,
    BackendConfig,
    BackendSuite,
    ConcurrencyGate,
    EmbeddingVector,
)
from .http import (
    HttpEmbedBackend,
    HttpGenerateBackend,
    HttpMatteBackend,
    HttpRecaptionBackend,
    http_suite_from_config,
    http_suite_from_env,
)
from .mock import (
    BLANK_MARKER,
    FAIL_MARKER,
    MockEmbedBackend,
    MockGenerateBackend,
    MockMatteBackend,
    MockRecaptionBackend,
    PlantedArray,
    make_mock_suite,
)
from .server import make_backend_app
from .stdio import StdioTransport, stdio_suite, worker_main

__all__ = [
    "DEFAULT_EMBED_DIM",
    "BackendConfig",
    "BackendSuite",
    "ConcurrencyGate",
    "EmbeddingVector",
    "HttpEmbedBackend",
    "HttpGenerateBackend",
    "HttpMatteBackend",
    "HttpRecaptionBackend",
    "http_suite_from_config",
    "http_suite_from_env",
    "BLANK_MARKER",
    "FAIL_MARKER",
    "MockEmbedBackend",
    "MockGenerateBackend",
    "MockMatteBackend",
    "MockRecaptionBackend",
    "PlantedArray",
    "make_mock_suite",
    "make_backend_app",
    "StdioTransport",
    "stdio_suite",
    "worker_main",
]
