"""Shared fixtures: complete election trees ready for voting."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from eballot.auth_service import AuthService
from eballot.ballot import (
    BallotConfig,
    BallotDefinition,
    BallotManifest,
    BallotPaths,
    ReissueMode,
    TokenBinding,
    setup_ballot,
)
from eballot.envelope import ManagerIdentity, Role, load_public_key
from eballot.sealing import SealController, SealState, baseline
from eballot.vote_service import VoteService

# Unit-test elections use a reduced KDF cost; the scheme is identical.
TEST_KDF_ITERATIONS = 2_000


@dataclass
class Election:
    root: Path
    paths: BallotPaths
    manifest: BallotManifest
    identities: dict[str, ManagerIdentity]
    credentials: dict[str, dict[str, str]]
    unseal_tokens: dict[str, str] = field(default_factory=dict)

    def _state_dir(self, service: str) -> Path:
        return self.paths.auth_state if service == "auth" else self.paths.vote_state

    def _rules(self, service: str):
        if service == "auth":
            return self.paths.auth_guard_rules()
        return self.paths.vote_guard_rules()

    def _sysmgr(self, service: str) -> ManagerIdentity:
        role = Role.AUTH_SYS_MGR if service == "auth" else Role.VOTE_SYS_MGR
        return self.identities[role.value]

    def seal_service(self, service: str) -> str:
        manifest = baseline(
            self.paths.baseline_roots(),
            self._sysmgr(service),
            exclude=self.paths.baseline_exclude(),
        )
        manifest.save(self._state_dir(service) / "baseline.txt")
        controller = SealController(self._state_dir(service), rules=self._rules(service))
        token = controller.seal()
        self.unseal_tokens[service] = token
        return token

    def seal_all(self) -> None:
        for service in ("auth", "vote"):
            self.seal_service(service)

    def unseal_service(self, service: str) -> SealController:
        controller = SealController(
            self._state_dir(service), rules=self._rules(service), restarted=True
        )
        controller.set_state(SealState.SOFTMODE, unseal_token=self.unseal_tokens[service])
        return controller

    def unseal_all(self) -> None:
        for service in ("auth", "vote"):
            self.unseal_service(service)

    def auth_service(self) -> AuthService:
        return AuthService(self.root)

    def vote_service(self) -> VoteService:
        return VoteService(self.root)

    def public_key(self, role: Role):
        return load_public_key(self.paths.public_key_file(role))


def _read_bundle(paths: BallotPaths, username: str) -> dict[str, str]:
    lines = (paths.credentials_dir / f"{username}.txt").read_text().splitlines()
    return dict(line.split(": ", 1) for line in lines if ": " in line)


@pytest.fixture
def make_election(tmp_path):
    counter = iter(range(1000))

    def make(
        roster: tuple[str, ...] = ("alice", "bob", "carol"),
        choices: tuple[str, ...] = ("yes", "no"),
        reissue: ReissueMode = ReissueMode.NONE,
        binding: TokenBinding = TokenBinding.INDEPENDENT,
        pin_enabled: bool = True,
        allow_write_in: bool = False,
        sealed: bool = True,
        with_tls: bool = False,
        token_length: int = 32,
        kdf_iterations: int = TEST_KDF_ITERATIONS,
    ) -> Election:
        root = tmp_path / f"ballot{next(counter)}"
        definition = BallotDefinition(
            ballot_id="unit-2026",
            question="Accept the proposal?",
            choices=choices,
            allow_write_in=allow_write_in,
        )
        config = BallotConfig(
            token_binding=binding,
            reissue_mode=reissue,
            pin_enabled=pin_enabled,
            token_length=token_length,
            kdf_iterations=kdf_iterations,
        )
        manifest, identities = setup_ballot(
            root, list(roster), definition, config, with_tls=with_tls
        )
        paths = BallotPaths(root)
        election = Election(
            root=root,
            paths=paths,
            manifest=manifest,
            identities=identities,
            credentials={u: _read_bundle(paths, u) for u in roster},
        )
        if sealed:
            election.seal_all()
        return election

    return make


@pytest.fixture(scope="session")
def verification_vectors() -> list[dict]:
    data = json.loads(
        (Path(__file__).parent / "data" / "verification_vectors.json").read_text()
    )
    return data["vectors"]


def pytest_terminal_summary(terminalreporter) -> None:
    """Replay the acceptance verdict lines outside pytest's output capture."""
    module = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    if module is None or not getattr(module, "VERDICTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for criterion, verdict in module.VERDICTS:
        terminalreporter.write_line(f"[acceptance] {criterion}: {verdict}")
