"""Flux: a small two-player cell game, solved exactly and learned tabularly.

The package splits into a pure rules engine (:mod:`flux.engine`), baseline
policies (:mod:`flux.agents`), tabular Q-learning (:mod:`flux.qlearn`), an
exact solver (:mod:`flux.solver`), a chat-model harness (:mod:`flux.llm`),
match running and failure tagging (:mod:`flux.arena`), and a CLI
(:mod:`flux.cli`).
"""

from .engine import (
    Action,
    GameState,
    Op,
    Reason,
    Role,
    TerminalStatus,
    apply,
    decode_action,
    encode_action,
    initial_state,
    legal_actions,
    role_to_move,
    state_key,
    status_of,
)

__all__ = [
    "Action",
    "GameState",
    "Op",
    "Reason",
    "Role",
    "TerminalStatus",
    "apply",
    "decode_action",
    "encode_action",
    "initial_state",
    "legal_actions",
    "role_to_move",
    "state_key",
    "status_of",
]
