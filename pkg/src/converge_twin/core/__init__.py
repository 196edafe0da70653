"""Service layer: auth/API surface, session orchestration, append-only trace
repository with sealed dataset export, and the model registry."""

from .auth import AccessPolicy, PolicyStore  # noqa: F401
from .models import ModelEntry, ModelRegistry, builtin_registry  # noqa: F401
from .sessions import Session, SessionManager  # noqa: F401
from .storage import TraceStore  # noqa: F401
