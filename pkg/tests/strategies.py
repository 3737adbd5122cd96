"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st


@st.composite
def distributions(draw, min_n=1, max_n=6, positive=False, n=None):
    if n is None:
        n = draw(st.integers(min_n, max_n))
    lo = 0.05 if positive else 0.0
    w = draw(st.lists(st.floats(lo, 1.0), min_size=n + 1, max_size=n + 1))
    w = np.asarray(w)
    if w.sum() <= 0:
        w = np.ones(n + 1)
    return w / w.sum()


@st.composite
def positive_pairs(draw, min_n=1, max_n=6):
    n = draw(st.integers(min_n, max_n))
    p = draw(distributions(n=n, positive=True))
    q = draw(distributions(n=n, positive=True))
    return p, q
