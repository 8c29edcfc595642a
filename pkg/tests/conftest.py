from __future__ import annotations

import pytest

from procalc.gateway import ModelGateway
from procalc.toolhub import ToolRegistry, load_protocols


@pytest.fixture()
def registry() -> ToolRegistry:
    return load_protocols()


@pytest.fixture()
def recording_gateway(tmp_path):
    """Gateway factory wired to an in-test rule transport; records to a
    throwaway store so replay twins can be built on top."""

    def factory(transport):
        return ModelGateway(
            mode="record", replay_path=tmp_path / "store.jsonl", transport=transport
        )

    return factory
