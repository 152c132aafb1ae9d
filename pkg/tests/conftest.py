import os
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest
from hypothesis import settings, strategies as st

from fairpost.profiles import AccuracyProfile, ProfileFamily

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

COMPAS_ENV = "FAIRPOST_COMPAS_CSV"

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome for the terminal summary."""

    @contextmanager
    def record(number, title):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        except pytest.skip.Exception:
            status = "SKIP"
            raise
        finally:
            _ACCEPTANCE.append((number, title, status, time.perf_counter() - start))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, secs in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}  ({secs:.2f}s)")


@pytest.fixture
def compas_csv():
    path = os.environ.get(COMPAS_ENV)
    if not path or not os.path.exists(path):
        pytest.skip(f"COMPAS data not supplied: set {COMPAS_ENV} to the filtered ProPublica CSV")
    return path


# -- hypothesis strategies ---------------------------------------------------------------

@st.composite
def score_sets(draw, min_size=1, max_size=8):
    ks = draw(st.lists(st.integers(0, 1000), min_size=min_size, max_size=max_size, unique=True))
    return sorted(ks)


@st.composite
def profiles(draw, min_size=1, max_size=8, exact=False, keys=None, group="g"):
    ks = keys if keys is not None else draw(score_sets(min_size, max_size))
    ws = draw(st.lists(st.integers(1, 100), min_size=len(ks), max_size=len(ks)))
    total = sum(ws)
    if exact:
        return AccuracyProfile(group, {Fraction(k, 1000): Fraction(w, total)
                                       for k, w in zip(ks, ws)})
    return AccuracyProfile(group, [(k / 1000, w / total) for k, w in zip(ks, ws)])


@st.composite
def nice_families(draw, min_groups=2, max_groups=4, min_size=2, max_size=8, exact=False):
    ks = draw(score_sets(min_size, max_size))
    n = draw(st.integers(min_groups, max_groups))
    return ProfileFamily([draw(profiles(keys=ks, exact=exact, group=f"g{i + 1}"))
                          for i in range(n)])
