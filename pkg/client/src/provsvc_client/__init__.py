"""Lightweight lineage capture SDK for the provsvc service."""

from .capture import (
    HttpTransport,
    InvalidValue,
    TaskCapture,
    TransportError,
    WorkflowSession,
)
from .middleware import instrument_handler

__version__ = "0.1.0"
