import pytest

from jetbrst.builtins import build_toy_model, build_yang_mills
from jetbrst.coordsplit import validate_split
from jetbrst.homotopy import run_algorithm

_cache = {}


def ym_run(algebra="su2", n=2, mode="s", **kw):
    """Model, coordinate system and result for a builtin YM configuration (memoised)."""
    key = (algebra, n, mode, tuple(sorted(kw.items())))
    if key not in _cache:
        model = build_yang_mills(n, algebra, 2, mode, **kw)
        cs = validate_split(model)
        res = run_algorithm(model, cs, max_iter=8)
        _cache[key] = (model, cs, res)
    return _cache[key]


@pytest.fixture(scope="session")
def su2_s():
    return ym_run("su2", 2, "s")


@pytest.fixture(scope="session")
def su2_stilde():
    return ym_run("su2", 2, "stilde")


@pytest.fixture(scope="session")
def abelian_s():
    return ym_run("abelian1", 2, "s")


@pytest.fixture(scope="session")
def toy():
    model = build_toy_model()
    cs = validate_split(model)
    return model, cs, run_algorithm(model, cs)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Register the running test under an acceptance criterion: call with
    (number, title).  A criterion passes when every test registered under it
    passes; the outcome is reported in the terminal summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE, {})
    entry = {}

    def start(number, title):
        entry.update(number=number, title=title)

    yield start
    if entry:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        detail = ""
        if not ok:
            crash = getattr(getattr(rep, "longrepr", None), "reprcrash", None)
            detail = f"{request.node.name}: {crash.message if crash else 'did not complete'}"
        title, runs = log.setdefault(entry["number"], (entry["title"], []))
        runs.append((ok, detail))
        print(f"criterion {entry['number']}: {'PASS' if ok else 'FAIL'} - {title}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        title, runs = log[number]
        failed = [d for ok, d in runs if not ok]
        line = f"criterion {number}: {'FAIL' if failed else 'PASS'} - {title} ({len(runs)} case(s))"
        if failed:
            line += f"; {failed[0].splitlines()[0][:120]}"
        terminalreporter.write_line(line)
