import numpy as np
import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


class Criterion:
    """Collects the checks of one acceptance criterion; a criterion passes only if every check does."""

    def __init__(self, store, name):
        self.store = store
        self.name = name

    def check(self, label, ok, detail=""):
        ok = bool(ok)
        entry = self.store.setdefault(self.name, [])
        entry.append((label, ok, detail))
        print(f"[{self.name}] {'PASS' if ok else 'FAIL'} {label}: {detail}")
        return ok


@pytest.fixture
def criterion(request):
    def make(name):
        return Criterion(request.config.stash[_ACCEPTANCE], name)

    return make


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda s: int(s.split()[0].lstrip("C"))):
        checks = results[name]
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{label} {'ok' if good else 'FAILED'} ({d})" for label, good, d in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
