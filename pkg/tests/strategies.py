"""Hypothesis strategies for feature matrices and memberships."""
import numpy as np
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mcr2.rates import RateParams

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def feature_matrices(draw, max_d=8, max_m=10, min_m=1):
    d = draw(st.integers(1, max_d))
    m = draw(st.integers(min_m, max_m))
    return draw(hnp.arrays(np.float64, (d, m), elements=finite))


@st.composite
def memberships(draw, m, max_k=4):
    k = draw(st.integers(1, max_k))
    if draw(st.booleans()):
        labels = draw(st.lists(st.integers(0, k - 1), min_size=m, max_size=m))
        pi = np.zeros((m, k))
        pi[np.arange(m), labels] = 1.0
        return pi
    w = draw(hnp.arrays(np.float64, (m, k), elements=st.floats(0.01, 1.0)))
    return w / w.sum(axis=1, keepdims=True)


rate_params = st.builds(RateParams, st.floats(0.05, 4.0), st.sampled_from(["bits", "nats"]))
