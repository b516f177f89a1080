from __future__ import annotations

import os
import shutil
import socket
from importlib import resources
from pathlib import Path

import pytest

FIXTURES = Path(str(resources.files("vcexit").joinpath("data", "fixtures")))

_acceptance_results: dict[str, tuple[str, str]] = {}


_LOOPBACK = ("127.0.0.1", "::1", "localhost")


def _guarded_connect(connect):
    def guarded(self, address):
        host = address[0] if isinstance(address, tuple) else None
        if host is not None and host not in _LOOPBACK:
            raise RuntimeError(f"network access attempted: {address!r}")
        return connect(self, address)

    return guarded


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, text): exit criterion, reported in the terminal summary")
    if os.environ.get("VCEXIT_FORBID_NETWORK") == "1":
        socket.socket.connect = _guarded_connect(socket.socket.connect)
        socket.socket.connect_ex = _guarded_connect(socket.socket.connect_ex)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    crit_id, text = marker.args
    key = f"{crit_id}"
    prev = _acceptance_results.get(key, ("PASS", text))[0]
    failed = report.failed or (report.when == "call" and report.skipped)
    _acceptance_results[key] = ("FAIL" if failed or prev == "FAIL" else "PASS", text)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_acceptance_results, key=lambda k: int(k)):
        status, text = _acceptance_results[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {text}")


@pytest.fixture
def demo_dir(tmp_path) -> Path:
    """A writable copy of the bundled three-firm demo."""
    dst = tmp_path / "demo"
    shutil.copytree(FIXTURES / "demo", dst, ignore=shutil.ignore_patterns("out"))
    return dst


@pytest.fixture
def exit_mix_dir(tmp_path) -> Path:
    dst = tmp_path / "exit_mix"
    shutil.copytree(FIXTURES / "exit_mix", dst, ignore=shutil.ignore_patterns("out"))
    return dst
