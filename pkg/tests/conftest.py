import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from martapprox.chain import (
    as_observable,
    build_chain,
    iid_chain,
    l2_0_spectral_radius,
    random_chain,
    random_observable,
    random_reversible_chain,
    two_state_chain,
)


@pytest.fixture
def two_state():
    chain = two_state_chain(0.3, 0.1)
    return chain, as_observable(chain, [3.0, -1.0])


@pytest.fixture
def iid():
    chain = iid_chain([0.5, 0.5])
    return chain, as_observable(chain, [1.0, -1.0])


@pytest.fixture
def coboundary():
    """g(xi_{k+1}) = Qg(xi_k) on every transition, so X_k = g(xi_k) - g(xi_{k+1})."""
    chain = build_chain([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0]])
    return chain, as_observable(chain, [0.0, 1.0, -1.0])


def random_chains(seed, count, sizes=(2, 8), kind="general", max_radius=None):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        chain = random_chain(rng, n) if kind == "general" else random_reversible_chain(rng, n)
        if max_radius is not None and l2_0_spectral_radius(chain) > max_radius:
            continue
        out.append((chain, random_observable(rng, chain)))
    return out


@st.composite
def chain_and_observable(draw, max_states=10, kind="general"):
    n = draw(st.integers(2, max_states))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if kind == "reversible":
        chain = random_reversible_chain(rng, n)
    else:
        chain = random_chain(rng, n, concentration=draw(st.sampled_from([0.5, 1.0, 3.0])))
    return chain, random_observable(rng, chain)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
