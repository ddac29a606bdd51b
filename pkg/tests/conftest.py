from __future__ import annotations

CRITERIA = {
    1: "Poincare polynomial g=2 with certificate",
    2: "Morse index formula",
    3: "DtN closed form vs finite differences",
    4: "P+ + P- symmetry, positivity, kernel rule",
    5: "boundary flow convergence",
    6: "finite-flow minima, energy identity, gradients",
    7: "rate classification and Lojasiewicz exponents",
    8: "Kempf-Ness convexity and slopes",
    9: "Birkhoff factorization suite",
    10: "byte-identical reruns",
}

_outcomes: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome == "failed":
        _outcomes.setdefault(crit, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit, title in CRITERIA.items():
        results = _outcomes.get(crit)
        if results is None:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {crit:2d}: {status:7s} {title}")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None and mark.args:
            item.user_properties.append(("criterion", mark.args[0]))
