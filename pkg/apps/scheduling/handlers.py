"""Per-node handler lifecycle."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from apps.dags.exceptions import IllegalState


class HandlerState(str, Enum):
    CREATED = "created"
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"
    COMPLETED = "completed"
    DROPPED = "dropped"
    FAILED_OOM = "failed_oom"

    @property
    def terminal(self) -> bool:
        return self in TERMINAL_STATES


TERMINAL_STATES = frozenset({HandlerState.COMPLETED, HandlerState.DROPPED, HandlerState.FAILED_OOM})

LEGAL_TRANSITIONS: frozenset[tuple[HandlerState, HandlerState]] = frozenset({
    (HandlerState.CREATED, HandlerState.READY),
    (HandlerState.READY, HandlerState.RUNNING),
    (HandlerState.RUNNING, HandlerState.BLOCKED),
    (HandlerState.RUNNING, HandlerState.COMPLETED),
    (HandlerState.RUNNING, HandlerState.FAILED_OOM),
    (HandlerState.BLOCKED, HandlerState.READY),
    (HandlerState.READY, HandlerState.DROPPED),
    (HandlerState.RUNNING, HandlerState.DROPPED),
})


def is_legal(current: HandlerState | str, target: HandlerState | str) -> bool:
    return (HandlerState(current), HandlerState(target)) in LEGAL_TRANSITIONS


@dataclass
class Handler:
    """Tracks one node instance of one job through its lifecycle."""

    node: str
    state: HandlerState = HandlerState.CREATED
    history: list[HandlerState] = field(default_factory=list)

    def transition(self, target: HandlerState) -> HandlerState:
        if not is_legal(self.state, target):
            raise IllegalState(f"{self.node}: {self.state.value} -> {target.value} is not allowed")
        previous = self.state
        self.history.append(previous)
        self.state = target
        return previous

    @property
    def terminal(self) -> bool:
        return self.state.terminal
