"""Access policies: static principals with bearer tokens, default-deny."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from ..errors import ParseError


@dataclass(frozen=True)
class AccessPolicy:
    principal: str
    token: str
    operations: tuple[str, ...] = ()
    quota: int = 1  # max concurrent (non-terminal) sessions


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


class PolicyStore:
    """In-memory policy table. An absent principal has no permissions."""

    def __init__(self, policies: Optional[list[AccessPolicy]] = None):
        self._by_name: dict[str, AccessPolicy] = {}
        self._by_token: dict[str, AccessPolicy] = {}
        for policy in policies or []:
            self._by_name[policy.principal] = policy
            self._by_token[policy.token] = policy

    @staticmethod
    def from_file(path) -> "PolicyStore":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ParseError(f"malformed policy file: {exc}") from exc
        policies = []
        for entry in (doc or {}).get("principals", []):
            policies.append(AccessPolicy(
                principal=str(entry["name"]),
                token=str(entry["token"]),
                operations=tuple(entry.get("operations", [])),
                quota=int(entry.get("quota", 1)),
            ))
        return PolicyStore(policies)

    def principal_for_token(self, token: str) -> Optional[str]:
        policy = self._by_token.get(token)
        return policy.principal if policy else None

    def authorize(self, principal: Optional[str], operation: str,
                  resource: Optional[str] = None,
                  active_sessions: int = 0) -> Decision:
        if principal is None or principal not in self._by_name:
            return Decision(False, "no policy")
        policy = self._by_name[principal]
        if "*" not in policy.operations and operation not in policy.operations:
            return Decision(False, f"operation {operation!r} not granted")
        if operation == "create_session" and active_sessions >= policy.quota:
            return Decision(False, "quota")
        return Decision(True)
