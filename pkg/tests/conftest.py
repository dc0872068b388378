import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE: dict = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when != "call":
        return
    n = mark.args[0]
    ok = call.excinfo is None
    prev = ACCEPTANCE.get(n, (True, []))
    detail = getattr(item.module, "DETAILS", {}).get(item.name, "")
    ACCEPTANCE[n] = (prev[0] and ok, prev[1] + [f"{item.name}{': ' + detail if detail else ''}"
                                                 f"{'' if ok else ' [FAILED]'}"])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, parts = ACCEPTANCE[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
        for p in parts:
            tr.write_line(f"    {p}")
