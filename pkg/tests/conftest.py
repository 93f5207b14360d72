"""Shared fixtures and independent brute-force oracles for the test suite.

The brute-force helpers here enumerate coalitions with itertools and apply
the defining factorial-weighted sums directly; they share no code with the
library's oracle or probe paths, so any agreement is evidence, not tautology.
"""

import sys
from itertools import chain, combinations
from math import factorial
from pathlib import Path

import numpy as np
import pytest

_SRC = Path(__file__).resolve().parents[1] / "src"
try:
    import tnshap  # noqa: F401
except ImportError:  # running from a checkout without installation
    sys.path.insert(0, str(_SRC))
    import tnshap  # noqa: F401

from tnshap import LiftSpec, TensorNetworkModel, TnTopology, off_state


def powerset(items):
    s = list(items)
    return chain.from_iterable(combinations(s, r) for r in range(len(s) + 1))


def coalition_value_fn(model, lifts, x):
    """The interventional game of (model, x): on-features keep their lifted
    vector, the rest sit at the all-off state. Evaluates one forward per call.
    """
    lifted = lifts.lift_instance(x)

    def value(coalition):
        legs = [
            lifted[i] if (i + 1) in coalition else off_state(lifted[i].shape[0])
            for i in range(model.n)
        ]
        return model.forward(legs)

    return value


def brute_shapley(n, value):
    """Defining Shapley sum over the full powerset (independent oracle)."""
    phi = []
    for i in range(1, n + 1):
        rest = [j for j in range(1, n + 1) if j != i]
        total = 0.0
        for c in powerset(rest):
            s = len(c)
            w = factorial(s) * factorial(n - s - 1) / factorial(n)
            total += w * (value(set(c) | {i}) - value(set(c)))
        phi.append(total)
    return np.array(phi)


def brute_sii(n, k, value):
    """Defining order-k interaction sum over the full powerset."""
    out = []
    for subset in combinations(range(1, n + 1), k):
        rest = [j for j in range(1, n + 1) if j not in subset]
        total = 0.0
        for c in powerset(rest):
            s = len(c)
            w = factorial(s) * factorial(n - k - s) / factorial(n - k + 1)
            delta = 0.0
            for part in powerset(subset):
                delta += (-1.0) ** (k - len(part)) * value(set(c) | set(part))
            total += w * delta
        out.append(total)
    return np.array(out)


def product_model():
    """g = x1 * x2 as a bond-1 tensor train over binary lifts."""
    topo = TnTopology("tt", 2, (2, 2), (1,))
    pick = np.array([[1.0], [0.0]]).reshape(1, 2, 1)
    return TensorNetworkModel(topo, [pick, pick.copy()]), LiftSpec.binary(2)


def additive_model(a=2.0, b=3.0):
    """g = a*x1 + b*x2 as a bond-2 tensor train over binary lifts."""
    topo = TnTopology("tt", 2, (2, 2), (2,))
    first = np.zeros((1, 2, 2))
    first[0, 0, 0] = a  # data channel feeds bond channel 0
    first[0, 1, 1] = 1.0  # bias feeds bond channel 1
    second = np.zeros((2, 2, 1))
    second[0, 1, 0] = 1.0  # channel 0 closes with x2's bias
    second[1, 0, 0] = b  # channel 1 picks b * x2
    return TensorNetworkModel(topo, [first, second]), LiftSpec.binary(2)


def random_tt_model(rng, n, bond=3, scale=1.0):
    from tnshap import capped_uniform_bonds

    dims = (2,) * n
    topo = TnTopology("tt", n, dims, capped_uniform_bonds("tt", dims, bond))
    cores = [scale * rng.standard_normal(s) / np.sqrt(s[-1]) for s in topo.core_shapes()]
    return TensorNetworkModel(topo, cores), LiftSpec.binary(n)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
