_results: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    num, title = props["criterion"]
    if report.when == "call" or report.outcome != "passed":
        prev = _results.get(num)
        if prev is None or prev[1] == "PASS":
            _results[num] = (title, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        title, verdict, secs = _results[num]
        terminalreporter.write_line(f"[{verdict}] criterion {num}: {title} ({secs:.2f} s)")
