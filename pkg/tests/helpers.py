from __future__ import annotations

from pathlib import Path

from procalc.gateway import ModelGateway

TESTS_DIR = Path(__file__).parent


def replay_twin(gateway: ModelGateway) -> ModelGateway:
    """Replay-mode gateway over a recorded store."""
    return ModelGateway(mode="replay", replay_path=gateway.store.path)
