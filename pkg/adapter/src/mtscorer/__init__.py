"""Forced-decoding token-score server for multilingual translation models."""

from .adapter import (
    AdapterConfig,
    ModelAdapter,
    ModelLoadError,
    OverLengthInput,
    RequestError,
    ScoredTarget,
    TokenizationError,
)
from .models import UnsupportedLanguage, detect_family, map_code
from .protocol import PROTOCOL_VERSION, ProtocolError, Request
from .selftest import run_self_test
from .serve import serve

__version__ = "0.1.0"
