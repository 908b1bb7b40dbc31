import numpy as np
import pytest

from htrw import exterior, forward, grids


def reference_phantom(d):
    return forward.Phantom.single([0.3] + [0.0] * (d - 1), 0.4)


class Pipeline:
    """Default-resolution run of the reference experiment, computed once per dimension."""

    def __init__(self, d, Q=32, lmax=12, n_t=2048):
        self.d = d
        self.phantom = reference_phantom(d)
        self.tg = grids.TimeGrid(n_t)
        self.sg = grids.make_sphere_grid(d, Q)
        self.b = forward.wave_data(self.phantom, self.tg, self.sg)
        self.ch = grids.sh_analysis(self.b, lmax)
        self.cx = grids.extend_and_transform(self.ch)
        self.R = exterior.channel_response(self.cx)


@pytest.fixture(scope="session")
def pipeline():
    cache = {}

    def get(d, **kw):
        key = (d,) + tuple(sorted(kw.items()))
        if key not in cache:
            cache[key] = Pipeline(d, **kw)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# ---------------------------------------------------------------------------
# acceptance table

_ACCEPTANCE = []


def record_acceptance(tag, passed, text):
    line = f"{tag} {'PASS' if passed else 'FAIL'}  {text}"
    _ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: s.split()[0]):
            terminalreporter.write_line(line)
