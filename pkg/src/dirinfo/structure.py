"""Influence-graph recovery from directed-information queries.

Three algorithms reconstruct which processes causally influence which:

* :func:`mgm_construct` starts every candidate parent set full and prunes
  one process at a time, re-conditioning on the surviving candidates
  (adaptive; ``m*(m-1)`` queries total);
* :func:`di_construct` tests each ordered pair against the full
  complement-conditioned value (embarrassingly parallel; ``m*(m-1)``
  queries, every conditioning set of size ``m-2``);
* :func:`bounded_recovery` assumes a per-node in-degree bound ``K`` and
  uses only unconditioned flows from size-``K`` source blocks, so no
  statistic ever involves more than ``K+1`` processes at once; the parent
  set is the intersection of all blocks achieving (nearly) the maximal
  flow.

All three consult a :class:`DIOracle`, which memoizes values and keeps a
query log so tests can audit exactly which statistics were needed.
"""

from __future__ import annotations

import itertools
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .exactinfo import EPS_BITS, InfoValue, ProcessSelector, cc_directed_information
from .model import JointDistribution

__all__ = [
    "BoundedRecoveryResult",
    "DIOracle",
    "DirectedGraph",
    "ExactDIOracle",
    "NodeRecoveryDetail",
    "QueryRecord",
    "RecoveryDiagnosticWarning",
    "bounded_recovery",
    "causal_markov_boundary",
    "di_construct",
    "graph_from_json",
    "graph_to_dot",
    "graph_to_json",
    "mgm_construct",
    "structure_recovery_bounded",
    "verify_generative_model",
]


class RecoveryDiagnosticWarning(UserWarning):
    """Raised as a warning when bounded recovery returns a degenerate answer."""


@dataclass(frozen=True)
class DirectedGraph:
    """A directed influence graph on ``m`` processes, stored as parent sets.

    Self-loops are forbidden (every process always depends on its own past
    implicitly); directed cycles are explicitly allowed.
    """

    m: int
    parents: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"need at least one node, got m={self.m}")
        if len(self.parents) != self.m:
            raise ValueError(f"expected {self.m} parent sets, got {len(self.parents)}")
        parents = tuple(frozenset(int(p) for p in ps) for ps in self.parents)
        for i, ps in enumerate(parents):
            if i in ps:
                raise ValueError(f"node {i} cannot be its own parent")
            bad = sorted(p for p in ps if not 0 <= p < self.m)
            if bad:
                raise ValueError(f"node {i} has out-of-range parents {bad}")
        object.__setattr__(self, "parents", parents)

    @classmethod
    def from_parent_map(cls, m: int, mapping: Mapping[int, Iterable[int]]) -> "DirectedGraph":
        parents = [frozenset(mapping.get(i, ())) for i in range(m)]
        return cls(m=m, parents=tuple(parents))

    @classmethod
    def empty(cls, m: int) -> "DirectedGraph":
        return cls(m=m, parents=tuple(frozenset() for _ in range(m)))

    def edges(self) -> tuple[tuple[int, int], ...]:
        """All edges as ``(source, target)`` pairs, sorted."""
        return tuple(
            (k, i) for i in range(self.m) for k in sorted(self.parents[i])
        )

    def has_edge(self, source: int, target: int) -> bool:
        return source in self.parents[target]

    def without_edge(self, source: int, target: int) -> "DirectedGraph":
        if not self.has_edge(source, target):
            raise ValueError(f"no edge {source}->{target} to remove")
        parents = list(self.parents)
        parents[target] = parents[target] - {source}
        return DirectedGraph(m=self.m, parents=tuple(parents))

    def with_edge(self, source: int, target: int) -> "DirectedGraph":
        parents = list(self.parents)
        parents[target] = parents[target] | {source}
        return DirectedGraph(m=self.m, parents=tuple(parents))


def graph_to_json(graph: DirectedGraph) -> dict:
    return {
        "m": graph.m,
        "parents": {str(i): sorted(graph.parents[i]) for i in range(graph.m)},
    }


def graph_from_json(payload: Mapping) -> DirectedGraph:
    try:
        m = int(payload["m"])
        parents = tuple(
            frozenset(int(p) for p in payload["parents"][str(i)]) for i in range(m)
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed graph payload: {exc}") from exc
    return DirectedGraph(m=m, parents=parents)


def graph_to_dot(
    graph: DirectedGraph,
    edge_labels: Mapping[tuple[int, int], float] | None = None,
    node_names: Sequence[str] | None = None,
) -> str:
    """Render the graph in DOT syntax, one node per process.

    ``edge_labels`` attaches a numeric label (e.g. a normalized estimated
    rate) to each edge it covers.
    """
    if node_names is None:
        node_names = [f"p{i}" for i in range(graph.m)]
    if len(node_names) != graph.m:
        raise ValueError(f"expected {graph.m} node names, got {len(node_names)}")
    lines = ["digraph influence {"]
    for i, name in enumerate(node_names):
        lines.append(f'  n{i} [label="{name}"];')
    for k, i in graph.edges():
        if edge_labels is not None and (k, i) in edge_labels:
            lines.append(f'  n{k} -> n{i} [label="{edge_labels[(k, i)]:.3f}"];')
        else:
            lines.append(f"  n{k} -> n{i};")
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class QueryRecord:
    """One oracle consultation, cached or freshly computed."""

    sources: frozenset[int]
    target: int
    conditioning: frozenset[int]
    value: float
    cached: bool


class DIOracle:
    """Query interface the structure algorithms consume.

    Subclasses implement :meth:`_compute`; this base class provides
    memoization (identical selectors always return identical values) and an
    append-only query log for auditing how much statistical machinery a run
    actually touched.  Memo and log updates are lock-protected so
    independent queries may be issued from worker threads.
    """

    def __init__(self) -> None:
        self._memo: dict[tuple, InfoValue] = {}
        self._log: list[QueryRecord] = []
        self._lock = threading.Lock()

    def _compute(self, sel: ProcessSelector) -> InfoValue:
        raise NotImplementedError

    def value(self, sel: ProcessSelector) -> InfoValue:
        key = (sel.sources, sel.target, sel.conditioning)
        with self._lock:
            hit = self._memo.get(key)
            if hit is not None:
                self._log.append(
                    QueryRecord(
                        sources=sel.sources,
                        target=sel.target,
                        conditioning=sel.conditioning,
                        value=hit.value,
                        cached=True,
                    )
                )
                return hit
        result = self._compute(sel)
        with self._lock:
            result = self._memo.setdefault(key, result)
            self._log.append(
                QueryRecord(
                    sources=sel.sources,
                    target=sel.target,
                    conditioning=sel.conditioning,
                    value=result.value,
                    cached=False,
                )
            )
        return result

    @property
    def query_log(self) -> tuple[QueryRecord, ...]:
        with self._lock:
            return tuple(self._log)

    @property
    def query_count(self) -> int:
        with self._lock:
            return len(self._log)

    def reset_log(self) -> None:
        """Clear the log (not the memo); lets callers count per-run queries."""
        with self._lock:
            self._log.clear()

    def max_conditioning_size(self) -> int:
        log = self.query_log
        return max((len(r.conditioning) for r in log), default=0)

    def max_source_size(self) -> int:
        log = self.query_log
        return max((len(r.sources) for r in log), default=0)


class ExactDIOracle(DIOracle):
    """Oracle backed by exhaustive summation over an enumerated joint."""

    def __init__(self, joint: JointDistribution) -> None:
        super().__init__()
        self.joint = joint
        self.m = joint.m

    def _compute(self, sel: ProcessSelector) -> InfoValue:
        return cc_directed_information(self.joint, sel)


def _query(oracle: DIOracle, sources: Iterable[int], target: int,
           conditioning: Iterable[int] = ()) -> float:
    sel = ProcessSelector(
        sources=frozenset(sources),
        target=target,
        conditioning=frozenset(conditioning),
    )
    return oracle.value(sel).value


def causal_markov_boundary(
    oracle: DIOracle,
    i: int,
    m: int,
    eps: float = EPS_BITS,
    order: Sequence[int] | None = None,
) -> frozenset[int]:
    """Minimal parent set of node ``i`` by adaptive pruning.

    Starts from all other processes and scans candidates once (ascending by
    default; ``order`` overrides for order-invariance checks), dropping each
    candidate whose flow into ``i``, conditioned on the other survivors,
    is at most ``eps``.  Issues exactly ``m - 1`` oracle queries.
    """
    if not 0 <= i < m:
        raise ValueError(f"node {i} out of range for m={m}")
    candidates = [k for k in range(m) if k != i]
    if order is None:
        scan = candidates
    else:
        scan = [int(k) for k in order]
        if sorted(scan) != candidates:
            raise ValueError(
                f"scan order {order!r} is not a permutation of the other nodes"
            )
    active = set(candidates)
    for k in scan:
        if _query(oracle, {k}, i, active - {k}) <= eps:
            active.remove(k)
    return frozenset(active)


def mgm_construct(
    oracle: DIOracle, m: int, eps: float = EPS_BITS, jobs: int = 1
) -> DirectedGraph:
    """Recover the influence graph with adaptive per-node pruning.

    Each node's parent set is found independently (parallel when ``jobs``
    exceeds 1); within a node the scan is sequential because later queries
    condition on earlier pruning decisions.  ``m*(m-1)`` queries total.
    """
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parents = list(
                pool.map(lambda i: causal_markov_boundary(oracle, i, m, eps), range(m))
            )
    else:
        parents = [causal_markov_boundary(oracle, i, m, eps) for i in range(m)]
    return DirectedGraph(m=m, parents=tuple(parents))


def di_construct(
    oracle: DIOracle, m: int, eps: float = EPS_BITS, jobs: int = 1
) -> DirectedGraph:
    """Recover the influence graph edge by edge.

    Tests every ordered pair ``(k, i)`` against the flow from ``k`` to
    ``i`` conditioned on all remaining processes; the tests are mutually
    independent, so they parallelize freely.  ``m*(m-1)`` queries, every
    conditioning set of size ``m - 2``.
    """
    everyone = frozenset(range(m))
    pairs = [(k, i) for i in range(m) for k in range(m) if k != i]

    def test(pair: tuple[int, int]) -> tuple[tuple[int, int], bool]:
        k, i = pair
        return pair, _query(oracle, {k}, i, everyone - {k, i}) > eps

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = dict(pool.map(test, pairs))
    else:
        outcomes = dict(map(test, pairs))

    parents = [
        frozenset(k for k in range(m) if k != i and outcomes[(k, i)])
        for i in range(m)
    ]
    return DirectedGraph(m=m, parents=tuple(parents))


@dataclass(frozen=True)
class NodeRecoveryDetail:
    """Per-node audit trail of bounded recovery."""

    target: int
    bound: int
    values: tuple[tuple[frozenset[int], float], ...]
    maximal: tuple[frozenset[int], ...]
    parents: frozenset[int]
    empty_intersection: bool


@dataclass(frozen=True)
class BoundedRecoveryResult:
    graph: DirectedGraph
    details: tuple[NodeRecoveryDetail, ...]


def _normalize_bounds(
    K: int | Mapping[int, int] | Callable[[int], int], m: int
) -> list[int]:
    if callable(K):
        bounds = [int(K(i)) for i in range(m)]
    elif isinstance(K, Mapping):
        try:
            bounds = [int(K[i]) for i in range(m)]
        except KeyError as exc:
            raise ValueError(f"in-degree bound missing for node {exc}") from exc
    else:
        bounds = [int(K)] * m
    for i, k in enumerate(bounds):
        if k < 0:
            raise ValueError(f"in-degree bound for node {i} is negative")
        if k > m - 2:
            raise ValueError(
                f"in-degree bound {k} for node {i} exceeds m-2 = {m - 2}; "
                f"the bound must leave at least two candidate source blocks"
            )
    return bounds


def bounded_recovery(
    oracle: DIOracle,
    m: int,
    K: int | Mapping[int, int] | Callable[[int], int],
    delta: float = 0.05,
    *,
    eps: float = EPS_BITS,
    tie_eps: float = 1e-9,
    jobs: int = 1,
) -> BoundedRecoveryResult:
    """In-degree-bounded recovery with full per-node diagnostics.

    For each node ``i`` every size-``K(i)`` block of other processes is
    scored by its unconditioned flow into ``i``; blocks within a ``delta``
    fraction of the best score (plus a ``tie_eps`` absolute cushion for
    floating-point ties) are maximal, and the parent set is their
    intersection.  Only ``(K+1)``-wise statistics are ever requested.

    When the best score is at most ``eps`` the node is declared parentless
    outright.  An empty intersection of genuinely informative maximal
    blocks is reported via :class:`RecoveryDiagnosticWarning` and left
    empty; choosing a fallback is the caller's policy.
    """
    bounds = _normalize_bounds(K, m)
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must be in [0, 1), got {delta}")

    tasks = [
        (i, frozenset(block))
        for i in range(m)
        for block in itertools.combinations(
            [k for k in range(m) if k != i], bounds[i]
        )
    ]

    def score(task: tuple[int, frozenset[int]]) -> tuple[tuple[int, frozenset[int]], float]:
        i, block = task
        return task, _query(oracle, block, i)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scored = dict(pool.map(score, tasks))
    else:
        scored = dict(map(score, tasks))

    details = []
    parents = []
    for i in range(m):
        values = {block: scored[(i, block)] for (j, block) in tasks if j == i}
        best = max(values.values())
        if best <= eps:
            chosen: frozenset[int] = frozenset()
            maximal: tuple[frozenset[int], ...] = ()
            empty = False
        else:
            cut = (1.0 - delta) * best - tie_eps
            maximal = tuple(
                sorted((b for b, v in values.items() if v >= cut), key=sorted)
            )
            chosen = frozenset.intersection(*maximal)
            empty = not chosen and bounds[i] > 0
            if empty:
                listing = ", ".join("{" + ",".join(map(str, sorted(b))) + "}" for b in maximal)
                warnings.warn(
                    f"bounded recovery found no common member among the "
                    f"maximal source blocks for node {i}: {listing}; "
                    f"returning an empty parent set",
                    RecoveryDiagnosticWarning,
                    stacklevel=2,
                )
        parents.append(chosen)
        details.append(
            NodeRecoveryDetail(
                target=i,
                bound=bounds[i],
                values=tuple(sorted(values.items(), key=lambda kv: sorted(kv[0]))),
                maximal=maximal,
                parents=chosen,
                empty_intersection=empty,
            )
        )
    graph = DirectedGraph(m=m, parents=tuple(parents))
    return BoundedRecoveryResult(graph=graph, details=tuple(details))


def structure_recovery_bounded(
    oracle: DIOracle,
    m: int,
    K: int | Mapping[int, int] | Callable[[int], int],
    delta: float = 0.05,
    *,
    eps: float = EPS_BITS,
    tie_eps: float = 1e-9,
    jobs: int = 1,
) -> DirectedGraph:
    """Graph-only view of :func:`bounded_recovery`."""
    return bounded_recovery(
        oracle, m, K, delta, eps=eps, tie_eps=tie_eps, jobs=jobs
    ).graph


def verify_generative_model(
    joint: JointDistribution, g: DirectedGraph, eps: float = EPS_BITS
) -> bool:
    """True when ``g``'s parent sets reproduce the full joint dynamics.

    For each node the flow from all processes outside ``parents(i) u {i}``
    into ``i``, conditioned on ``parents(i)``, must vanish: nothing beyond
    the declared parents carries information about the node's next symbol.
    Supersets of true parent sets pass; missing edges fail.
    """
    if g.m != joint.m:
        raise ValueError(f"graph has {g.m} nodes but joint has {joint.m} processes")
    for i in range(g.m):
        rest = frozenset(range(g.m)) - {i} - g.parents[i]
        if not rest:
            continue
        sel = ProcessSelector(sources=rest, target=i, conditioning=g.parents[i])
        if cc_directed_information(joint, sel).value > eps:
            return False
    return True
