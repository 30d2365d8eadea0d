"""Hypothesis strategies for states and splits."""
from hypothesis import strategies as st

from qcert.statevec import Seed, haar_state

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def states(draw, min_n=2, max_n=7):
    n = draw(st.integers(min_n, max_n))
    return haar_state(n, Seed(draw(seeds)))


@st.composite
def state_pairs(draw, min_n=2, max_n=7):
    n = draw(st.integers(min_n, max_n))
    r = draw(st.integers(1, n - 1))
    psi = haar_state(n, Seed(draw(seeds)))
    phi = haar_state(n, Seed(draw(seeds), 1))
    return psi, phi, r
