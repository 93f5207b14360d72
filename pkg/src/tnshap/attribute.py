"""Probe-interpolation attribution: Shapley values and order-k interactions.

For a target feature set S of size k, the probe Q_S(t) toggles the features
in S (inclusion-exclusion over on/off, or the equivalent single signed-toggle
contraction) while every other leg is scaled by the diagonal selector S(t).
Multilinearity makes Q_S a polynomial in t of degree at most n - k whose
coefficients aggregate the discrete derivatives by coalition size, so n - k + 1
probe evaluations at Chebyshev-Gauss nodes plus one Vandermonde solve recover
the exact index as a size-weighted sum of the interpolated coefficients.

Forward accounting is part of the contract: inclusion-exclusion spends
2^k (n - k + 1) evaluations per subset, signed toggle n - k + 1. The
all-singletons case reuses shared prefix/suffix (or rooted) environments so
the same probe values cost far fewer arithmetic passes; the counter still
reports one forward per evaluated input configuration.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor_net
from .config import get_worker_budget
from .lift import LiftSpec, off_state, signed_toggle

logger = logging.getLogger(__name__)

INCLUSION_EXCLUSION = "inclusion-exclusion"
SIGNED_TOGGLE = "signed-toggle"
MODES = (INCLUSION_EXCLUSION, SIGNED_TOGGLE)

ILL_CONDITIONED_RESIDUAL = 1e-6
CONDITIONING_WARN_NODES = 30


def chebyshev_nodes(m: int) -> np.ndarray:
    """Chebyshev-Gauss nodes mapped to (0, 1).

    t_l = (1 + cos((2l + 1) pi / (2m))) / 2 for l = 0..m-1, returned in the
    formula's natural (descending) order.
    """
    if m < 1:
        raise ValueError("need at least one node")
    ell = np.arange(m)
    return 0.5 * (1.0 + np.cos((2 * ell + 1) * np.pi / (2 * m)))


def shapley_weights(n: int) -> np.ndarray:
    """Size weights s!(n-s-1)!/n! for s = 0..n-1.

    Factorials are exact integers; each weight is one correctly rounded
    division, so any n >= 1 is supported.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fact = math.factorial
    return np.array([fact(s) * fact(n - s - 1) / fact(n) for s in range(n)])


def sii_weights(n: int, k: int) -> np.ndarray:
    """Interaction size weights s!(n-k-s)!/(n-k+1)! for s = 0..n-k.

    Reduces to ``shapley_weights(n)`` at k = 1.
    """
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} must satisfy 1 <= k <= n={n}")
    fact = math.factorial
    return np.array([fact(s) * fact(n - k - s) / fact(n - k + 1) for s in range(n - k + 1)])


class ProbePlan:
    """Interpolation nodes with a cached factorization of their Vandermonde
    system, reusable across subsets and instances that share m = n - k + 1.
    """

    def __init__(self, m: int, nodes=None) -> None:
        if nodes is None:
            nodes = chebyshev_nodes(m)
        nodes = np.asarray(nodes, dtype=np.float64)
        if nodes.shape != (m,):
            raise ValueError(f"expected {m} nodes, got shape {nodes.shape}")
        gaps = np.abs(np.subtract.outer(nodes, nodes))
        if m > 1 and np.min(gaps[~np.eye(m, dtype=bool)]) <= 1e-12:
            raise ValueError("interpolation nodes must be pairwise distinct")
        self.m = m
        self.nodes = nodes
        self.vandermonde = np.vander(nodes, m, increasing=True)
        self._q, self._r = np.linalg.qr(self.vandermonde)
        self.condition = float(np.linalg.cond(self.vandermonde))
        if m > CONDITIONING_WARN_NODES:
            logger.warning(
                "monomial Vandermonde with %d nodes (condition ~%.2e): "
                "interpolation accuracy degrades; computing anyway",
                m,
                self.condition,
            )

    def solve(self, rhs: np.ndarray):
        """Solve V c = rhs columnwise with one step of iterative refinement.

        Returns (coefficients, per-column max-abs residuals).
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        squeeze = rhs.ndim == 1
        q = rhs.reshape(self.m, -1)
        if self.m == 1:
            coeffs = q.copy()
            resid = np.zeros(q.shape[1])
        else:
            try:
                coeffs = np.linalg.solve(self._r, self._q.T @ q)
                residual = q - self.vandermonde @ coeffs
                coeffs += np.linalg.solve(self._r, self._q.T @ residual)
            except np.linalg.LinAlgError:
                # exactly singular R (degenerate nodes): fall back to the
                # minimum-norm solution so a value is still returned
                coeffs = np.linalg.lstsq(self.vandermonde, q, rcond=None)[0]
            resid = np.max(np.abs(q - self.vandermonde @ coeffs), axis=0)
        if squeeze:
            return coeffs[:, 0], float(resid[0])
        return coeffs, resid


@dataclass(frozen=True)
class AttributionSet:
    """Attribution values of one order for one instance.

    ``subsets`` are sorted 1-based feature tuples in lexicographic order,
    aligned with ``values``. ``flagged`` lists subsets whose Vandermonde
    solve residual stayed above the ill-conditioning threshold.
    """

    order: int
    subsets: tuple
    values: np.ndarray
    forwards_used: int
    max_solve_residual: float
    flagged: frozenset = field(default_factory=frozenset)

    def entries(self):
        return list(zip(self.subsets, self.values.tolist()))

    def value(self, subset) -> float:
        target = tuple(sorted(int(i) for i in subset))
        return float(self.values[self.subsets.index(target)])


def _normalize_subsets(n: int, k: int, subsets):
    if isinstance(subsets, str):
        if subsets != "all":
            raise ValueError(f"unknown subset request {subsets!r}")
        return list(itertools.combinations(range(1, n + 1), k))
    norm = []
    for s in subsets:
        t = tuple(sorted(int(i) for i in s))
        if len(t) != k or len(set(t)) != k:
            raise ValueError(f"subset {s} is not a {k}-element set")
        if t[0] < 1 or t[-1] > n:
            raise ValueError(f"subset {s} has feature indices outside 1..{n}")
        norm.append(t)
    return sorted(set(norm))


def degree_to_size_transform(m: int) -> np.ndarray:
    """Basis change from interpolated probe coefficients to size aggregates.

    The probe polynomial's t^u coefficient sums the monomial masses whose
    complement part has exactly u members; the size-s marginal aggregate
    (what the Shapley/SII size weights expect) counts each such mass once
    per size-s complement containing those u members, i.e. C(m-1-u, s-u)
    times. Row s, column u of the returned (m, m) matrix holds that count.
    """
    mat = np.zeros((m, m))
    for s in range(m):
        for u in range(s + 1):
            mat[s, u] = math.comb(m - 1 - u, s - u)
    return mat


def _resolve_mode(k: int, mode) -> str:
    if mode is None or mode == "auto":
        return INCLUSION_EXCLUSION if k == 1 else SIGNED_TOGGLE
    if mode not in MODES:
        raise ValueError(f"unknown probe mode {mode!r}")
    return mode


def _check_model_lifts(model, lifts: LiftSpec) -> None:
    if lifts.n != model.n:
        raise ValueError(f"lift spec covers {lifts.n} features, model has {model.n}")
    for i, (dl, dm) in enumerate(zip(lifts.dims, model.phys_dims)):
        if dl != dm:
            raise ValueError(
                f"mode {i + 1}: lift produces dim {dl}, model expects {dm}"
            )


def probe_value(model, lifts: LiftSpec, x, subset, t: float, mode=INCLUSION_EXCLUSION) -> float:
    """Evaluate the probe Q_S(t; x) for one subset at one selector value."""
    _check_model_lifts(model, lifts)
    n = model.n
    s = _normalize_subsets(n, len(tuple(subset)), [subset])[0]
    mode = mode if mode in MODES else _resolve_mode(len(s), mode)
    lifted = lifts.lift_instance(x)
    qmat = _probe_matrix(model, lifted, [s], np.array([float(t)]), mode)
    return float(qmat[0, 0])


def _scaled_inputs(lifted, nodes: np.ndarray) -> list:
    """Per-leg (m, d) arrays: lifted vectors with data channels scaled per node."""
    out = []
    for v in lifted:
        u = np.tile(v, (nodes.shape[0], 1))
        u[:, :-1] *= nodes[:, None]
        out.append(u)
    return out


def _sandwich(left, mid, right) -> np.ndarray:
    # (b, l) x (l, r) x (b, r) -> (b,)
    return np.einsum("br,br->b", left @ mid, right)


def _probe_matrix_k1_shared(model, lifted, nodes, mode) -> np.ndarray:
    """All-features order-1 probes via shared environments.

    Returns (m, n) probe values; the arithmetic shares selector-scaled
    prefix/suffix (train) or rooted (tree) environments across features.
    """
    topo = model.topology
    cores = model.cores
    n = model.n
    scaled = _scaled_inputs(lifted, nodes)
    qmat = np.empty((nodes.shape[0], n))
    if topo.kind == tensor_net.TT:
        lstates = tensor_net.tt_left_states(cores, scaled)
        rstates = tensor_net.tt_right_states(cores, scaled)
        for i in range(n):
            core = cores[i]
            if mode == SIGNED_TOGGLE:
                mid = (core * signed_toggle(lifted[i])[None, :, None]).sum(axis=1)
                qmat[:, i] = _sandwich(lstates[i], mid, rstates[i + 1])
            else:
                mon = (core * lifted[i][None, :, None]).sum(axis=1)
                moff = core[:, -1, :]
                qmat[:, i] = _sandwich(lstates[i], mon, rstates[i + 1]) - _sandwich(
                    lstates[i], moff, rstates[i + 1]
                )
    else:
        up = tensor_net.tree_up_messages(topo, cores, scaled)
        down = tensor_net.tree_down_messages(topo, cores, up)
        L = topo.leaf_count
        for j in range(n):
            core = cores[tensor_net._tree_core_index(L, L + j)]
            env = down[L + j]
            if mode == SIGNED_TOGGLE:
                qmat[:, j] = env @ (signed_toggle(lifted[j]) @ core)
            else:
                won = lifted[j] @ core
                woff = core[-1, :]
                qmat[:, j] = env @ (won - woff)
    per_subset = nodes.shape[0] * (2 if mode == INCLUSION_EXCLUSION else 1)
    model.counter.add(per_subset * n)
    return qmat


def _probe_matrix(model, lifted, subsets, nodes, mode) -> np.ndarray:
    """Probe values for every (node, subset) pair via one flat batched forward.

    Returns an (m, num_subsets) matrix.
    """
    n = model.n
    k = len(subsets[0])
    m = nodes.shape[0]
    if mode == INCLUSION_EXCLUSION:
        patterns = 1 << k
        signs = np.array(
            [(-1.0) ** (k - bin(p).count("1")) for p in range(patterns)]
        )
    else:
        patterns = 1
        signs = np.array([1.0])
    scaled = _scaled_inputs(lifted, nodes)
    legs = [np.tile(np.repeat(scaled[r], patterns, axis=0), (len(subsets), 1)) for r in range(n)]
    for s_idx, subset in enumerate(subsets):
        base = s_idx * m * patterns
        for pos, feat in enumerate(subset):
            r = feat - 1
            if mode == SIGNED_TOGGLE:
                legs[r][base : base + m * patterns] = signed_toggle(lifted[r])
            else:
                on = lifted[r]
                off = off_state(on.shape[0])
                for p in range(patterns):
                    vec = on if (p >> pos) & 1 else off
                    legs[r][base + p : base + m * patterns : patterns] = vec
    values = model.forward_batch(legs).reshape(len(subsets), m, patterns)
    return (values @ signs).T


def explain(model, lifts: LiftSpec, x, k: int, subsets="all", mode=None, plan: ProbePlan | None = None) -> AttributionSet:
    """Compute order-k attribution values for one instance.

    Parameters
    ----------
    model : TensorNetworkModel (or any object with the same forward protocol)
    lifts : LiftSpec matching the model's physical dimensions
    x : raw instance of length n
    k : interaction order (k = 1 gives Shapley values)
    subsets : "all" for every k-subset, or an explicit list of 1-based tuples
    mode : "inclusion-exclusion", "signed-toggle", or None/"auto"
        (inclusion-exclusion for k = 1, signed toggle otherwise)
    plan : optional pre-built ProbePlan with n - k + 1 nodes

    Each subset's probe polynomial is interpolated on the plan's nodes and
    combined with the order-k size weights. Subsets whose solve residual
    exceeds the ill-conditioning threshold are flagged but still reported.
    """
    _check_model_lifts(model, lifts)
    n = model.n
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} must satisfy 1 <= k <= n={n}")
    subset_list = _normalize_subsets(n, k, subsets)
    mode = _resolve_mode(k, mode)
    m = n - k + 1
    if plan is None:
        plan = ProbePlan(m)
    elif plan.m != m:
        raise ValueError(f"plan has {plan.m} nodes, order k={k} needs {m}")
    lifted = lifts.lift_instance(x)

    before = model.counter.count
    use_shared = (
        isinstance(subsets, str)
        and subsets == "all"
        and k == 1
        and n >= 2
        and isinstance(model, tensor_net.TensorNetworkModel)
    )
    if use_shared:
        qmat = _probe_matrix_k1_shared(model, lifted, plan.nodes, mode)
    else:
        qmat = _probe_matrix(model, lifted, subset_list, plan.nodes, mode)
    forwards = model.counter.count - before

    coeffs, residuals = plan.solve(qmat)
    marginals = degree_to_size_transform(m) @ coeffs
    weights = shapley_weights(n) if k == 1 else sii_weights(n, k)
    values = weights @ marginals
    residuals = np.atleast_1d(residuals)
    flagged = frozenset(
        s for s, r in zip(subset_list, residuals) if r > ILL_CONDITIONED_RESIDUAL
    )
    if flagged:
        logger.warning(
            "%d of %d subsets flagged ill-conditioned (max residual %.3e)",
            len(flagged),
            len(subset_list),
            float(np.max(residuals)),
        )
    return AttributionSet(
        order=k,
        subsets=tuple(subset_list),
        values=np.atleast_1d(values),
        forwards_used=forwards,
        max_solve_residual=float(np.max(residuals)),
        flagged=flagged,
    )


def explain_batch(model, lifts: LiftSpec, instances, k: int, mode=None, subsets="all") -> list:
    """Run ``explain`` over many instances with one shared ProbePlan.

    Per-instance failures do not abort the batch: the failing instance's slot
    holds the raised exception instead of an AttributionSet.
    """
    plan = ProbePlan(model.n - k + 1)

    def one(x):
        try:
            return explain(model, lifts, x, k, subsets=subsets, mode=mode, plan=plan)
        except Exception as exc:  # noqa: BLE001 - batch isolation is the contract
            return exc

    instances = list(instances)
    budget = get_worker_budget()
    if budget > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=budget) as pool:
            return list(pool.map(one, instances))
    return [one(x) for x in instances]


CSV_HEADER = "instance_id,order,subset,value,flag"


def write_attribution_csv(fh, per_instance) -> None:
    """Write attribution rows: header instance_id,order,subset,value,flag.

    ``per_instance`` is a list over instances of AttributionSet lists. Rows
    are ordered by instance, then order, then (already lexicographic) subset;
    subsets are semicolon-joined 1-based indices.
    """
    rows = []
    for iid, sets in enumerate(per_instance):
        for aset in sorted(sets, key=lambda a: a.order):
            for subset, value in aset.entries():
                flag = "ill_conditioned" if subset in aset.flagged else ""
                rows.append((iid, aset.order, subset, value, flag))
    write_attribution_rows(fh, rows)


def write_attribution_rows(fh, rows) -> None:
    """Serialize (instance_id, order, subset, value, flag) rows verbatim."""
    fh.write(CSV_HEADER + "\n")
    for iid, order, subset, value, flag in rows:
        subset_txt = ";".join(str(i) for i in subset)
        fh.write(f"{iid},{order},{subset_txt},{float(value)!r},{flag}\n")


def read_attribution_csv(fh) -> list:
    """Inverse of the writer: (instance_id, order, subset, value, flag) rows."""
    header = fh.readline().rstrip("\n")
    if header != CSV_HEADER:
        raise ValueError(f"bad attribution CSV header: {header!r}")
    rows = []
    for lineno, line in enumerate(fh, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        iid, order, subset_txt, value, flag = parts
        subset = tuple(int(s) for s in subset_txt.split(";"))
        rows.append((int(iid), int(order), subset, float(value), flag))
    return rows
