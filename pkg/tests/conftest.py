"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


@pytest.hookimpl(trylast=True)
def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when != "call" and report.passed:
        return
    entry = _outcomes.setdefault(props["criterion"], {"ok": True, "details": []})
    if not report.passed:
        entry["ok"] = False
        entry["details"].append(f"{report.nodeid.split('::')[-1]} {report.outcome}")
    elif "detail" in props:
        entry["details"].append(props["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        entry = _outcomes[n]
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(entry["details"][:5])
        terminalreporter.write_line(f"{status} criterion {n}: {detail}")
