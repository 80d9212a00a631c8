import os
import sys
from collections import defaultdict

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> list of (label, ok, detail)
RESULTS = defaultdict(list)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(RESULTS):
        checks = RESULTS[num]
        ok = all(c[1] for c in checks)
        failed = [f"{label} ({detail})" for label, good, detail in checks if not good]
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {len(checks) - len(failed)}/{len(checks)} checks"
        if failed:
            line += "; failing: " + "; ".join(failed)
        tr.write_line(line)
