"""Uniform clients, wire protocol and scripted replay for the ML backends."""

from .backends import BackendEndpoint, Backends, HttpBackend
from .protocol import Detection
from .scripted import CaptureBackends, DelayedBackends, FixtureStore, ScriptedBackend

__all__ = [
    "BackendEndpoint",
    "Backends",
    "HttpBackend",
    "Detection",
    "CaptureBackends",
    "DelayedBackends",
    "FixtureStore",
    "ScriptedBackend",
]
