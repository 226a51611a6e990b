import pytest

CRITERIA = {
    1: "heat equation: 12 cases, residual < 1e-6 at h=1e-4, >= 50x shrink per decade of h",
    2: "f-divergence gradient identity: 54 cases, quadrature 1e-5 and MC (n=1e6) 3 se",
    3: "KL special case: Gaussian closed form 1e-6, mixtures within 3 se",
    4: "P-form vs Q-form generalized Fisher: 10 random pairs x 6 generators, 3 combined se",
    5: "Gaussian oracles for divergence, relative Fisher and Fisher information",
    6: "entropy gradient constant equals 0.5 within 2% on 6 cases",
    7: "covariance descent: 1-D closed form 1e-8 and monotone; 2-D >= 90% of first-order drop",
    8: "score-matching fit: realizable target from 10 seeds, non-realizable vs grid search",
    9: "determinism: byte-identical CSV reruns, thread-count invariant estimates",
}

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.failed and rep.when == "setup"):
        _outcomes.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        runs = _outcomes.get(n)
        status = "NOT RUN" if runs is None else ("PASS" if all(runs) else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {status:7s} {text}")
