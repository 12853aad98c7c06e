import random

import pytest

from flux.arena import GameRecord, PlyRecord
from flux.engine import (
    Role,
    apply,
    encode_action,
    legal_actions,
    role_to_move,
    state_from_key,
    status_of,
)
from flux.llm import LlmStats, ScriptedBackend, llm_agent_step
from flux.qlearn import TrainConfig, train
from flux.solver import default_solved


@pytest.fixture(scope="session")
def solved():
    return default_solved()


@pytest.fixture(scope="session")
def small_tables():
    """A quick training run, big enough to produce sane tables for smoke tests."""
    return train(TrainConfig(episodes=1500, seed=11))


@pytest.fixture(scope="session")
def make_scripted_record():
    """Build a transcript by driving both seats through the reply pipeline.

    Replies are consumed in order per seat; anything unparseable gets the
    usual random-substitution treatment, so annotations come out exactly as
    they would in a real model-vs-model game.
    """

    def build(start_key, p0_replies, p1_replies, seed, game_id=0):
        rng = random.Random(seed)
        state = state_from_key(start_key)
        backends = {
            Role.SHRINKER: ScriptedBackend(list(p0_replies)),
            Role.AMPLIFIER: ScriptedBackend(list(p1_replies)),
        }
        conversations = {Role.SHRINKER: [], Role.AMPLIFIER: []}
        stats = {Role.SHRINKER: LlmStats(), Role.AMPLIFIER: LlmStats()}
        plies = []
        status = status_of(state)
        while not status.is_terminal:
            role = role_to_move(state)
            action, annotation = llm_agent_step(
                backends[role], conversations[role], state, role, rng, stats[role]
            )
            nxt, status = apply(state, action)
            plies.append(
                PlyRecord(
                    ply=state.moves_played + 1,
                    role=role,
                    cells_before=state.cells,
                    action_code=encode_action(action),
                    action_text=action.text,
                    cells_after=nxt.cells,
                    sum_after=nxt.total,
                    status=status,
                    annotation=annotation,
                )
            )
            state = nxt
        return GameRecord(game_id, seed, "scripted-s", "scripted-a", plies, status)

    return build


def random_playout(seed):
    """Play one uniformly random game and return the visited states."""
    rng = random.Random(seed)
    state = state_from_key("2,1,3,1,2|0")
    visited = [state]
    status = status_of(state)
    while not status.is_terminal:
        acts = legal_actions(state)
        state, status = apply(state, acts[rng.randrange(len(acts))])
        visited.append(state)
    return visited
