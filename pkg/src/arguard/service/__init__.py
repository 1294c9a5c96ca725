"""Edge HTTP service: sessions, frame verdicts, mitigation, latency stats."""

from .app import create_app
from .sessions import (
    LatencyRecord,
    MitigationDirective,
    ServiceSettings,
    SessionState,
    SessionStore,
)

__all__ = [
    "create_app",
    "LatencyRecord",
    "MitigationDirective",
    "ServiceSettings",
    "SessionState",
    "SessionStore",
]
