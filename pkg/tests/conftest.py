"""Shared test plumbing: the acceptance-criteria result board.

Each acceptance test registers its verdict here; the terminal summary then
prints one PASS/FAIL line per criterion so the outcome is visible even for
passing tests under captured output.
"""

criterion_results: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(criterion_results):
        ok, details = criterion_results[num]
        if ok:
            terminalreporter.write_line(f"CRITERION {num}: PASS")
        else:
            terminalreporter.write_line(f"CRITERION {num}: FAIL ({details})")
