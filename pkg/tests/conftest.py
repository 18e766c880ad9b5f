import pytest

# acceptance tests append (number, passed, message) here
ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    def record(number, passed, message):
        ACCEPTANCE.append((number, bool(passed), message))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {message}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, message in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {message}")


@pytest.fixture(scope="session")
def case_chart():
    """Case-study chart on the default region, with its build time in seconds."""
    import time

    from delaystab.continuation import assemble_chart
    from delaystab.scalar import CASE_STUDY

    t0 = time.perf_counter()
    chart = assemble_chart(CASE_STUDY, workers=4)
    return chart, time.perf_counter() - t0
