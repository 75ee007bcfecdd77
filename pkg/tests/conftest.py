import numpy as np
import pytest

from rivpjr.model import CandidateSet, RivModel


class FixedUniforms:
    """Stand-in generator returning a fixed table of uniforms."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def random(self, shape):
        assert tuple(shape) == self.rows.shape
        return self.rows


def uniform_model(weights):
    return RivModel.uniform_from_weights(weights)


def random_weights(rng, sigma):
    w = rng.dirichlet(np.ones(sigma))
    w[-1] = 1.0 - float(np.sum(w[:-1]))
    return w.tolist()


def random_candidates(rng, model, m):
    """m distinct interior positions, segment chosen by weight-free uniform draw."""
    out = set()
    while len(out) < m:
        t = int(rng.integers(1, model.sigma + 1))
        x = t + float(rng.random())
        if x != t:
            out.add(x)
    return CandidateSet(sorted(out), model)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[f"{number:02d}"] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
