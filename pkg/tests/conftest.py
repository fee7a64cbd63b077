import re

import pytest

ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, title): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        prev = ACCEPTANCE.get(cid, ("PASS", title))[0]
        ACCEPTANCE[cid] = ("FAIL" if "FAIL" in (prev, status) else status, title)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    def order(cid):
        m = re.match(r"AC(\d+)(.*)", cid)
        return (int(m[1]), m[2]) if m else (10**6, cid)

    for cid in sorted(ACCEPTANCE, key=order):
        status, title = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{status}] {cid} {title}")
