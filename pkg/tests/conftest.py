"""Shared fixtures: designs, spec documents, and scripted mock backends."""

from __future__ import annotations

from pathlib import Path

import pytest

from svworkbench.core import SessionConfig, SessionStore
from svworkbench.gateway import Gateway, MockBackend, MockFixtureWriter, load_templates
from svworkbench.runtime import AgentRuntime

FIXTURES = Path(__file__).parent / "fixtures"

TEMPLATES = load_templates()


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def auth_bypass_v() -> str:
    return read_fixture("authentication_bypass.v")


@pytest.fixture
def auth_bypass_tb() -> str:
    return read_fixture("authentication_bypass_tb.v")


@pytest.fixture
def uart_dma_top_v() -> str:
    return read_fixture("uart_dma_top.v")


@pytest.fixture
def soc_spec_md() -> str:
    return read_fixture("soc_spec.md")


@pytest.fixture
def isa_fixture_md() -> str:
    return read_fixture("isa_fixture.md")


BUG_DESCRIPTION = (
    "The authentication state machine transitions to the waiting state "
    "regardless of whether the authentication flag indicates a successful or "
    "failed hash match, so failed attempts are never blocked and the "
    "authentication mechanism can be bypassed by repeated tries."
)


class ScriptedBench:
    """One tmp-dir bundle: fixture writer, gateway, session store, runtime."""

    def __init__(self, tmp_path: Path, clock=None):
        self.tmp_path = tmp_path
        self.fixtures_dir = tmp_path / "mock_fixtures"
        self.writer = MockFixtureWriter(self.fixtures_dir, TEMPLATES)
        self._gateway = None
        ticks = iter(range(10**9))
        self.clock = clock or (lambda: float(next(ticks)))
        self.store = SessionStore(tmp_path / "data", clock=self.clock)

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            gw = Gateway(dict(TEMPLATES))
            gw.register_backend("mock", MockBackend(self.fixtures_dir))
            self._gateway = gw
        return self._gateway

    def reload_gateway(self) -> Gateway:
        """Pick up fixture files written after the first use."""
        self._gateway = None
        return self.gateway

    def runtime(self, config: SessionConfig | None = None, **overrides) -> AgentRuntime:
        runtime = AgentRuntime(
            gateway=self.gateway,
            session_store=self.store,
            config=config or SessionConfig(),
            work_dir=self.tmp_path / "work",
        )
        for key, value in overrides.items():
            setattr(runtime, key, value)
        return runtime


@pytest.fixture
def bench(tmp_path) -> ScriptedBench:
    return ScriptedBench(tmp_path)
