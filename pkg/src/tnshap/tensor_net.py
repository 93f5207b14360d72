"""Tensor-network models: topologies, forward contraction, cut rank.

Two topologies are supported: a tensor train (chain of order-3 cores with
boundary bonds of extent 1) and a balanced binary tree (leaves carry the
physical legs, internal nodes carry only bonds). Trees over a non-power-of-two
number of features are padded with dimension-1 dummy leaves whose input is
pinned to the scalar 1; dummies are invisible to callers.

Models are immutable after construction. Every evaluated input configuration
bumps a thread-safe forward counter: the scalar ``forward`` adds 1 per call,
``forward_batch`` adds one per row. Batched evaluation is the complexity
contract's unit of accounting, not an approximation -- each row is a full
contraction of one input configuration.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

TT = "tt"
BTREE = "btree"

DEFAULT_MATERIALIZE_LIMIT = 2**20


class ForwardCounter:
    """Thread-safe tally of evaluated input configurations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0

    def add(self, k: int = 1) -> None:
        with self._lock:
            self._count += int(k)

    @property
    def count(self) -> int:
        with self._lock:
            return self._count


@dataclass(frozen=True)
class TnTopology:
    """Shape-level description of a tensor network.

    Parameters
    ----------
    kind : str
        ``"tt"`` or ``"btree"``.
    n : int
        Number of (real) features; one physical leg each.
    phys_dims : tuple of int
        Physical dimension of each feature leg, length ``n``.
    bond_dims : tuple of int
        Internal edge extents. Chain order for a tensor train (``n - 1``
        entries). For a tree, one entry per non-root node in BFS order
        (``2 * leaf_count - 2`` entries, entry ``v - 2`` for node ``v``).

    Tree nodes use heap indexing: the root is node 1, node ``v`` has
    children ``2v`` and ``2v + 1``, leaf slot ``j`` is node
    ``leaf_count + j``. Slots ``>= n`` are dummy pads with physical
    dimension 1.
    """

    kind: str
    n: int
    phys_dims: tuple
    bond_dims: tuple

    def __post_init__(self):
        if self.kind not in (TT, BTREE):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("need at least one feature")
        object.__setattr__(self, "phys_dims", tuple(int(d) for d in self.phys_dims))
        object.__setattr__(self, "bond_dims", tuple(int(b) for b in self.bond_dims))
        if len(self.phys_dims) != self.n:
            raise ValueError("phys_dims length must equal n")
        if any(d < 1 for d in self.phys_dims):
            raise ValueError("physical dimensions must be >= 1")
        if any(b < 1 for b in self.bond_dims):
            raise ValueError("bond dimensions must be >= 1")
        expected = self.n - 1 if self.kind == TT else max(0, 2 * self.leaf_count - 2)
        if len(self.bond_dims) != expected:
            raise ValueError(
                f"{self.kind} over n={self.n} needs {expected} bond dims, "
                f"got {len(self.bond_dims)}"
            )

    @property
    def leaf_count(self) -> int:
        """Number of leaf slots (power of two for trees, n for trains)."""
        if self.kind == TT:
            return self.n
        return 1 if self.n == 1 else 2 ** math.ceil(math.log2(self.n))

    def leaf_phys_dim(self, slot: int) -> int:
        return self.phys_dims[slot] if slot < self.n else 1

    def tree_bond(self, v: int) -> int:
        """Extent of the edge between node ``v`` and its parent."""
        return self.bond_dims[v - 2]

    def core_shapes(self) -> list:
        """Core shapes in serialization order (chain / BFS node order)."""
        if self.kind == TT:
            shapes = []
            left = 1
            for i, d in enumerate(self.phys_dims):
                right = self.bond_dims[i] if i < self.n - 1 else 1
                shapes.append((left, d, right))
                left = right
            return shapes
        L = self.leaf_count
        if L == 1:
            return [(self.phys_dims[0],)]
        shapes = [(self.tree_bond(2), self.tree_bond(3))]
        for v in range(2, L):
            shapes.append((self.tree_bond(2 * v), self.tree_bond(2 * v + 1), self.tree_bond(v)))
        for j in range(L):
            shapes.append((self.leaf_phys_dim(j), self.tree_bond(L + j)))
        return shapes


def capped_uniform_bonds(kind: str, phys_dims, chi: int) -> tuple:
    """Uniform bond dimensions capped at the largest rank an edge can carry.

    The cap for an edge is the smaller of the physical-dimension products on
    its two sides; extents beyond that are pure parameter redundancy. Dummy
    tree leaves contribute a factor of 1, so dummy-side edges collapse to 1.
    """
    phys_dims = tuple(int(d) for d in phys_dims)
    n = len(phys_dims)
    chi = int(chi)
    if chi < 1:
        raise ValueError("bond dimension must be >= 1")

    def capped_prod(dims):
        p = 1
        for d in dims:
            p *= d
            if p > 10**9:
                return 10**9
        return p

    if kind == TT:
        return tuple(
            min(chi, capped_prod(phys_dims[: i + 1]), capped_prod(phys_dims[i + 1 :]))
            for i in range(n - 1)
        )
    if kind != BTREE:
        raise ValueError(f"unknown topology kind {kind!r}")
    L = 1 if n == 1 else 2 ** math.ceil(math.log2(n))
    if L == 1:
        return ()
    full = [phys_dims[j] if j < n else 1 for j in range(L)]
    bonds = []
    for v in range(2, 2 * L):
        lo, hi = _subtree_leaf_range(v, L)
        inside = capped_prod(full[lo:hi])
        outside = capped_prod(full[:lo] + full[hi:])
        bonds.append(min(chi, inside, outside))
    return tuple(bonds)


def _subtree_leaf_range(v: int, leaf_count: int):
    """Half-open leaf-slot range covered by node ``v`` of a perfect tree."""
    lo = v
    while lo < leaf_count:
        lo *= 2
    hi = v
    while hi < leaf_count:
        hi = 2 * hi + 1
    return lo - leaf_count, hi - leaf_count + 1


class TensorNetworkModel:
    """An immutable tensor network realizing a multilinear map on lifted inputs.

    Parameters
    ----------
    topology : TnTopology
    cores : sequence of array-like
        Cores in the topology's serialization order; shapes must match
        ``topology.core_shapes()`` exactly.
    """

    def __init__(self, topology: TnTopology, cores) -> None:
        self.topology = topology
        expected = topology.core_shapes()
        if len(cores) != len(expected):
            raise ValueError(f"expected {len(expected)} cores, got {len(cores)}")
        frozen = []
        for idx, (core, shape) in enumerate(zip(cores, expected)):
            arr = np.ascontiguousarray(core, dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ValueError(
                    f"core {idx}: expected shape {tuple(shape)}, got {arr.shape}"
                )
            arr.setflags(write=False)
            frozen.append(arr)
        self.cores = tuple(frozen)
        self.counter = ForwardCounter()

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def phys_dims(self) -> tuple:
        return self.topology.phys_dims

    @property
    def forward_count(self) -> int:
        return self.counter.count

    def forward(self, legs) -> float:
        """Contract the network with one input vector per feature leg.

        Counts as exactly one forward evaluation.
        """
        batch = [np.asarray(x, dtype=np.float64).reshape(1, -1) for x in legs]
        self._check_legs(batch)
        self.counter.add(1)
        return float(_contract_batch(self.topology, self.cores, batch)[0])

    def forward_batch(self, legs) -> np.ndarray:
        """Contract a batch of configurations; ``legs[i]`` has shape (B, d_i).

        Counts as B forward evaluations, one per configuration row.
        """
        batch = [np.asarray(x, dtype=np.float64) for x in legs]
        self._check_legs(batch)
        b = batch[0].shape[0]
        self.counter.add(b)
        return _contract_batch(self.topology, self.cores, batch)

    def _check_legs(self, batch) -> None:
        if len(batch) != self.n:
            raise ValueError(f"expected {self.n} input legs, got {len(batch)}")
        for i, (x, d) in enumerate(zip(batch, self.phys_dims)):
            if x.ndim != 2 or x.shape[1] != d:
                raise ValueError(
                    f"mode {i + 1}: expected input of length {d}, "
                    f"got shape {x.shape}"
                )


def cut_rank(topology: TnTopology) -> int:
    """Largest bond extent crossed by any bipartition into connected halves.

    Both supported topologies are acyclic, so any cut splitting the graph
    into two connected components crosses exactly one internal edge; the
    maximum over cuts is the maximum bond dimension.
    """
    return max(topology.bond_dims, default=1)


def _contract_batch(topology: TnTopology, cores, batch) -> np.ndarray:
    if topology.kind == TT:
        return _tt_contract(cores, batch)
    msgs = tree_up_messages(topology, cores, batch)
    return _tree_root_value(topology, cores, msgs)


def _tt_contract(cores, batch) -> np.ndarray:
    state = None
    for core, x in zip(cores, batch):
        left, d, right = core.shape
        if state is None:
            state = x @ core[0]
        else:
            tmp = (state @ core.reshape(left, d * right)).reshape(-1, d, right)
            state = np.einsum("bdr,bd->br", tmp, x)
    return state[:, 0]


def _dummy_input(rows: int) -> np.ndarray:
    return np.ones((rows, 1))


def tree_up_messages(topology: TnTopology, cores, batch) -> list:
    """Leaf-to-root messages. Entry ``v`` is the (B, bond) message node ``v``
    sends to its parent; unset entries are None. The root (node 1) sends none.
    """
    L = topology.leaf_count
    rows = batch[0].shape[0]
    msgs = [None] * (2 * L)
    for j in range(L):
        x = batch[j] if j < topology.n else _dummy_input(rows)
        if L == 1:
            msgs[1] = x @ cores[0].reshape(-1, 1)
            return msgs
        msgs[L + j] = x @ cores[_tree_core_index(L, L + j)]
    for v in range(L - 1, 1, -1):
        core = cores[_tree_core_index(L, v)]
        msgs[v] = _apply_internal_up(core, msgs[2 * v], msgs[2 * v + 1])
    return msgs


def tree_down_messages(topology: TnTopology, cores, msgs) -> list:
    """Root-to-leaf messages: entry ``v >= 2`` is the (B, bond) contraction of
    everything outside node ``v``'s subtree, dual to ``tree_up_messages``.
    """
    L = topology.leaf_count
    down = [None] * (2 * L)
    if L == 1:
        return down
    root = cores[0]
    down[2] = msgs[3] @ root.T
    down[3] = msgs[2] @ root
    for v in range(2, L):
        core = cores[_tree_core_index(L, v)]
        p, q, r = core.shape
        tmp = (msgs[2 * v + 1] @ core.transpose(1, 0, 2).reshape(q, p * r)).reshape(-1, p, r)
        down[2 * v] = np.einsum("bpr,br->bp", tmp, down[v])
        tmp = (msgs[2 * v] @ core.reshape(p, q * r)).reshape(-1, q, r)
        down[2 * v + 1] = np.einsum("bqr,br->bq", tmp, down[v])
    return down


def _tree_root_value(topology: TnTopology, cores, msgs) -> np.ndarray:
    L = topology.leaf_count
    if L == 1:
        return msgs[1][:, 0]
    root = cores[0]
    return np.einsum("bq,bq->b", msgs[2] @ root, msgs[3])


def _apply_internal_up(core, ml, mr) -> np.ndarray:
    p, q, r = core.shape
    tmp = (ml @ core.reshape(p, q * r)).reshape(-1, q, r)
    return np.einsum("bqr,bq->br", tmp, mr)


def _tree_core_index(leaf_count: int, v: int) -> int:
    """Position of node ``v`` in the BFS core serialization order."""
    return v - 1


def tt_left_states(cores, batch) -> list:
    """Prefix contractions: entry i is the (B, bond_i) state after absorbing
    legs 1..i; entry 0 is the all-ones (B, 1) boundary.
    """
    rows = batch[0].shape[0]
    states = [np.ones((rows, 1))]
    state = states[0]
    for core, x in zip(cores, batch):
        left, d, right = core.shape
        tmp = (state @ core.reshape(left, d * right)).reshape(-1, d, right)
        state = np.einsum("bdr,bd->br", tmp, x)
        states.append(state)
    return states


def tt_right_states(cores, batch) -> list:
    """Suffix contractions: entry i is the (B, bond_{i-1}) state for legs
    i+1..n absorbed; entry n is the all-ones (B, 1) boundary.
    """
    n = len(cores)
    rows = batch[0].shape[0]
    states = [None] * (n + 1)
    states[n] = np.ones((rows, 1))
    state = states[n]
    for i in range(n - 1, -1, -1):
        core = cores[i]
        left, d, right = core.shape
        tmp = (batch[i] @ core.transpose(1, 0, 2).reshape(d, left * right)).reshape(-1, left, right)
        state = np.einsum("blr,br->bl", tmp, state)
        states[i] = state
    return states


def materialize_full(model: TensorNetworkModel, limit: int = DEFAULT_MATERIALIZE_LIMIT) -> np.ndarray:
    """Expand the model into its dense coefficient tensor over the real legs.

    Refuses when the dense tensor would exceed ``limit`` entries.
    """
    entries = 1
    for d in model.phys_dims:
        entries *= d
    if entries > limit:
        raise ValueError(
            f"materialization needs {entries} entries, above the limit of {limit}"
        )
    topo = model.topology
    if topo.kind == TT:
        full = np.ones((1, 1))
        for core in model.cores:
            left, d, right = core.shape
            full = (full @ core.reshape(left, d * right)).reshape(-1, right)
        return full.reshape(model.phys_dims)
    return _tree_materialize(topo, model.cores, 1).reshape(model.phys_dims)


def _tree_materialize(topo: TnTopology, cores, v: int) -> np.ndarray:
    """Dense (prod real dims under v, bond) matrix for node ``v``'s subtree."""
    L = topo.leaf_count
    if L == 1:
        return np.asarray(cores[0]).reshape(-1)
    if v >= L:
        slot = v - L
        core = cores[_tree_core_index(L, v)]
        if slot >= topo.n:
            return core.reshape(1, -1)
        return core
    ml = _tree_materialize(topo, cores, 2 * v)
    mr = _tree_materialize(topo, cores, 2 * v + 1)
    core = cores[_tree_core_index(L, v)]
    if v == 1:
        return (ml @ core @ mr.T).reshape(-1)
    p, q, r = core.shape
    tmp = (ml @ core.reshape(p, q * r)).reshape(-1, q, r)
    return np.einsum("aqr,bq->abr", tmp, mr).reshape(-1, r)
