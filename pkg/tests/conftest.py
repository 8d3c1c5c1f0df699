import numpy as np
import pytest

from mmstab.corpus import builtin
from mmstab.generator import GeneratorConfig, generate_instance, random_config


@pytest.fixture(scope="session")
def p1():
    return builtin("p1")


@pytest.fixture(scope="session")
def p2():
    return builtin("p2")


@pytest.fixture(scope="session")
def p3():
    return builtin("p3")


@pytest.fixture(scope="session")
def p3_edited():
    return builtin("p3-edited")


def generated(count, seed=1234, **kw):
    """Deterministic list of random instances with nondegenerate upper splits unless asked."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        cfg = random_config(rng, **kw)
        cfg = GeneratorConfig(**{**cfg.as_dict(), "seed": int(rng.integers(2**31))})
        out.append(generate_instance(cfg))
    return out


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when not in ("call", "setup"):
                continue
            num = int(nodeid.split("test_criterion_")[1].split("_")[0])
            results[num] = results.get(num, True) and outcome == "passed"
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if results[num] else 'FAIL'}")
