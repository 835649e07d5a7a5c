import numpy as np
import pytest

from histgnn.graph import build_graph


def path3():
    return build_graph([(0, 1), (1, 2)], 3)


def star(leaves=3):
    return build_graph([(0, i) for i in range(1, leaves + 1)], leaves + 1)


def random_graph(rng, n, p=0.4):
    iu = np.stack(np.triu_indices(n, 1), axis=1)
    return build_graph(iu[rng.random(len(iu)) < p], n)


def two_cliques(k=10):
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(k + i, k + j) for i in range(k) for j in range(i + 1, k)]
    edges.append((k - 1, k))
    return build_graph(edges, 2 * k)


def numeric_grad(f, x, step=1e-6):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + step
        fp = f()
        x[i] = old - step
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1.0)
    err = np.abs(analytic - numeric).max()
    assert err <= rtol * scale + atol, f"gradient mismatch {err:.3e} (scale {scale:.3e})"


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance criteria report one line each; collected here and printed at the end of the run
ACCEPTANCE = []


def record(num, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2} {name}: {detail}"
    ACCEPTANCE.append((num, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
