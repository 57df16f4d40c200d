"""Shared pytest plumbing: the acceptance tests register one line per
criterion here and the summary hook prints them after the run, where
output capture can no longer hide them."""

acceptance_report = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_report:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report:
            terminalreporter.write_line(line)
