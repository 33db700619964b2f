"""Structural queries on influence graphs and their variable-level DAGs.

Three query families operate here:

* :func:`c_separates` decides whether a set of processes blocks all
  influence from one process set to another in a directed influence
  graph.  The criterion is path-based: a path is blocked when some node
  belonging to the blocking set (or the destination set) has one of its
  adjacent path edges directed away from it.  The relation is
  deliberately asymmetric: influence can be blocked in one direction
  while flowing freely in the other.
* :func:`unroll_dbn` expands a generative model into the DAG over
  individual variables (process, time), keeping only the parents inside
  each conditional's minimal support; under strict positivity that
  support is unique, and the implementation verifies the reduction it
  returns.
* :func:`d_separates` is standard d-separation on the unrolled DAG,
  implemented by reachability, used to validate blocking claims at the
  variable level.

Every query is pure and deterministic; graphs are immutable inputs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .exactinfo import EPS_BITS
from .model import (
    DEFAULT_ENUMERATION_CAP,
    GenerativeModel,
    JointDistribution,
    enumerate_joint,
)
from .structure import DirectedGraph

__all__ = [
    "SeparationVerdict",
    "UnrolledDag",
    "c_separates",
    "d_separates",
    "explain_c_separation",
    "unroll_dbn",
    "unrolled_to_dot",
]

Node = tuple[int, int]


# == 1. process-level blocking queries ==


def _check_disjoint_processes(
    g: DirectedGraph, u: frozenset[int], z: frozenset[int], w: frozenset[int]
) -> None:
    for name, block in (("u", u), ("z", z), ("w", w)):
        bad = sorted(i for i in block if not 0 <= i < g.m)
        if bad:
            raise ValueError(f"{name} mentions processes {bad} out of range for m={g.m}")
    if u & z or u & w or z & w:
        overlap = sorted((u & z) | (u & w) | (z & w))
        raise ValueError(f"u, z, w must be pairwise disjoint; they share {overlap}")


@dataclass(frozen=True)
class SeparationVerdict:
    """Outcome of a blocking query with a human-checkable witness.

    When ``separated``, ``blocked_at`` lists the blocking-set nodes that
    absorbed the search.  Otherwise ``walk`` is an unblocked walk as
    ``(node, arrived_inward)`` steps from a source node to a destination
    node: ``arrived_inward`` says the traversed edge points into that
    step's node (the first step starts the walk and carries no edge).
    """

    separated: bool
    blocked_at: tuple[int, ...] = ()
    walk: tuple[tuple[int, bool], ...] = ()


def explain_c_separation(
    g: DirectedGraph,
    u: Iterable[int],
    z: Iterable[int],
    w: Iterable[int],
) -> SeparationVerdict:
    """Blocking verdict plus witness; see :func:`c_separates` for the rule."""
    u = frozenset(int(i) for i in u)
    z = frozenset(int(i) for i in z)
    w = frozenset(int(i) for i in w)
    _check_disjoint_processes(g, u, z, w)
    if not u or not w:
        return SeparationVerdict(separated=True)

    out_edges: list[set[int]] = [set() for _ in range(g.m)]
    in_edges: list[set[int]] = [set() for _ in range(g.m)]
    for source, target in g.edges():
        out_edges[source].add(target)
        in_edges[target].add(source)

    blocking = z | w
    # States are (node, arrived_inward): arrived_inward is True when the
    # edge just traversed points into the node.  Arriving at a blocking
    # node along one of its outgoing edges makes that node block the
    # walk, so such states are never enqueued.
    State = tuple[int, bool]
    queue: deque[State] = deque()
    previous: dict[State, State | int] = {}
    blocked_at: set[int] = set()

    def push(node: int, arrived_inward: bool, origin: State | int) -> None:
        if node in blocking and not arrived_inward:
            blocked_at.add(node)
            return
        state = (node, arrived_inward)
        if state not in previous:
            previous[state] = origin
            queue.append(state)

    for start in sorted(u):
        for child in sorted(out_edges[start]):
            push(child, True, start)
        for parent in sorted(in_edges[start]):
            push(parent, False, start)

    while queue:
        state = queue.popleft()
        node, arrived_inward = state
        if node in w:
            steps = [state]
            origin = previous[state]
            while not isinstance(origin, int):
                steps.append(origin)
                origin = previous[origin]
            steps.append((origin, True))  # start node; direction unused
            steps.reverse()
            return SeparationVerdict(separated=False, walk=tuple(steps))
        if node in blocking:
            blocked_at.add(node)
            # May continue only by backing out along another inward edge.
            for parent in sorted(in_edges[node]):
                push(parent, False, state)
            continue
        for child in sorted(out_edges[node]):
            push(child, True, state)
        for parent in sorted(in_edges[node]):
            push(parent, False, state)
    return SeparationVerdict(separated=True, blocked_at=tuple(sorted(blocked_at)))


def c_separates(
    g: DirectedGraph,
    u: Iterable[int],
    z: Iterable[int],
    w: Iterable[int],
) -> bool:
    """True when ``z`` blocks every path of influence from ``u`` into ``w``.

    A path (undirected traversal of the directed graph) is blocked when
    some node of ``z | w`` on it has an adjacent path edge directed away
    from itself.  Equivalently, an unblocked path may touch ``z | w``
    nodes only through edges pointing into them, which is what the
    reachability search enforces step by step.  Walks and simple paths
    give the same verdict: shortcutting a walk never changes which edges
    meet a surviving node.
    """
    return explain_c_separation(g, u, z, w).separated


# == 2. variable-level DAG ==


@dataclass(frozen=True)
class UnrolledDag:
    """DAG over individual variables ``(process, time)``.

    ``parents`` maps a node to the set of nodes its conditional depends
    on; every edge goes from a strictly earlier time to a later one, so
    the graph is acyclic by construction.  Nodes absent from the mapping
    have no parents.
    """

    m: int
    n: int
    parents: Mapping[Node, frozenset[Node]]

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError("need m >= 1 processes and n >= 1 times")
        normalized: dict[Node, frozenset[Node]] = {}
        children: dict[Node, set[Node]] = {}
        for node, sources in self.parents.items():
            self._check_node(node)
            i, j = int(node[0]), int(node[1])
            cleaned = frozenset((int(k), int(t)) for k, t in sources)
            for parent in cleaned:
                self._check_node(parent)
                if parent[1] >= j:
                    raise ValueError(
                        f"edge {parent} -> {(i, j)} does not move forward in time"
                    )
            if cleaned:
                normalized[(i, j)] = cleaned
                for parent in cleaned:
                    children.setdefault(parent, set()).add((i, j))
        object.__setattr__(self, "parents", normalized)
        object.__setattr__(
            self,
            "_children",
            {node: frozenset(kids) for node, kids in children.items()},
        )

    def _check_node(self, node: Node) -> None:
        i, j = int(node[0]), int(node[1])
        if not (0 <= i < self.m and 0 <= j < self.n):
            raise ValueError(f"node {(i, j)} out of range for m={self.m}, n={self.n}")

    def nodes(self) -> tuple[Node, ...]:
        return tuple((i, j) for j in range(self.n) for i in range(self.m))

    def parents_of(self, node: Node) -> frozenset[Node]:
        self._check_node(node)
        return self.parents.get((int(node[0]), int(node[1])), frozenset())

    def children_of(self, node: Node) -> frozenset[Node]:
        self._check_node(node)
        return self._children.get((int(node[0]), int(node[1])), frozenset())

    def edges(self) -> tuple[tuple[Node, Node], ...]:
        out = []
        for child in sorted(self.parents):
            for parent in sorted(self.parents[child]):
                out.append((parent, child))
        return tuple(out)

    def collapse(self) -> DirectedGraph:
        """Process-level graph: ``k -> i`` when any ``(k, s) -> (i, t)`` exists."""
        parent_sets: list[set[int]] = [set() for _ in range(self.m)]
        for (i, _), sources in self.parents.items():
            for k, _ in sources:
                if k != i:
                    parent_sets[i].add(k)
        return DirectedGraph(
            m=self.m, parents=tuple(frozenset(s) for s in parent_sets)
        )


def _fits_enumeration_cap(model: GenerativeModel, cap: int) -> bool:
    log_cells = model.n * sum(math.log2(a.size) for a in model.alphabets)
    return log_cells <= math.log2(cap)


def _minimal_support(
    joint: JointDistribution,
    target: Node,
    declared: tuple[Node, ...],
    eps: float,
) -> frozenset[Node]:
    """Slots the target's conditional genuinely depends on.

    Drops every slot whose conditional mutual information with the target
    given the remaining declared slots is zero; under strict positivity
    the intersection property makes the surviving set the unique minimal
    support, and the joint drop is re-verified before returning.
    """
    step = frozenset({target})
    full = frozenset(declared)
    h_full = joint.conditional_entropy(step, full)
    kept = []
    for slot in declared:
        rest = full - {slot}
        if joint.conditional_entropy(step, rest) - h_full > eps:
            kept.append(slot)
    dropped = full - set(kept)
    if dropped:
        h_kept = joint.conditional_entropy(step, frozenset(kept))
        slack = eps * (1 + len(dropped))
        if h_kept - h_full > slack:
            raise RuntimeError(
                f"minimal support for {target} is not unique: dropping "
                f"{sorted(dropped)} one at a time looked safe but dropping "
                f"them jointly leaves {h_kept - h_full:.3e} bits unexplained; "
                f"the distribution may violate strict positivity"
            )
    return frozenset(kept)


def unroll_dbn(
    model: GenerativeModel,
    *,
    eps: float = EPS_BITS,
    cap: int = DEFAULT_ENUMERATION_CAP,
    use_exact: bool | None = None,
) -> UnrolledDag:
    """Variable-level DAG of a generative model.

    When the joint distribution fits the enumeration cap (or
    ``use_exact=True`` forces it), each variable keeps only the parents
    in its conditional's minimal support, found by exact
    conditional-independence tests at tolerance ``eps``.  Otherwise the
    declared window supplies the parent sets unreduced:
    ``use_exact=False`` picks that fallback explicitly, and forcing
    exactness on a model beyond the cap raises the capacity error.
    """
    if use_exact is None:
        use_exact = _fits_enumeration_cap(model, cap)
    joint = enumerate_joint(model, cap=cap) if use_exact else None

    parents: dict[Node, frozenset[Node]] = {}
    for i in range(model.m):
        for j in range(model.n):
            declared = tuple(model.context_slots(i, j))
            if not declared:
                continue
            if joint is None:
                parents[(i, j)] = frozenset(declared)
            else:
                support = _minimal_support(joint, (i, j), declared, eps)
                if support:
                    parents[(i, j)] = support
    return UnrolledDag(m=model.m, n=model.n, parents=parents)


def unrolled_to_dot(dag: UnrolledDag) -> str:
    """DOT rendering with one vertical layer per time index."""
    lines = ["digraph unrolled {", "  rankdir=LR;"]
    for j in range(dag.n):
        names = " ".join(f'"p{i}t{j}"' for i in range(dag.m))
        lines.append(f"  {{ rank=same; {names} }}")
    for i in range(dag.m):
        for j in range(dag.n):
            lines.append(f'  "p{i}t{j}" [label="p{i},t{j}"];')
    for parent, child in dag.edges():
        lines.append(
            f'  "p{parent[0]}t{parent[1]}" -> "p{child[0]}t{child[1]}";'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# == 3. variable-level separation ==


def _check_disjoint_nodes(
    dag: UnrolledDag,
    u: frozenset[Node],
    z: frozenset[Node],
    w: frozenset[Node],
) -> None:
    for name, block in (("u", u), ("z", z), ("w", w)):
        for node in block:
            try:
                dag._check_node(node)
            except ValueError as err:
                raise ValueError(f"{name}: {err}") from None
    if u & z or u & w or z & w:
        overlap = sorted((u & z) | (u & w) | (z & w))
        raise ValueError(f"u, z, w must be pairwise disjoint; they share {overlap}")


def _ancestors_of(dag: UnrolledDag, nodes: frozenset[Node]) -> frozenset[Node]:
    seen = set(nodes)
    stack = list(nodes)
    while stack:
        node = stack.pop()
        for parent in dag.parents_of(node):
            if parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return frozenset(seen)


def d_separates(
    dag: UnrolledDag,
    u: Iterable[Node],
    z: Iterable[Node],
    w: Iterable[Node],
) -> bool:
    """Standard d-separation verdict on the variable-level DAG.

    Implemented as reachability with travel direction as state: moving
    down through a conditioned node is barred, while moving up out of a
    collider is allowed exactly when the collider has a conditioned
    descendant (itself included).
    """
    u = frozenset((int(i), int(j)) for i, j in u)
    z = frozenset((int(i), int(j)) for i, j in z)
    w = frozenset((int(i), int(j)) for i, j in w)
    _check_disjoint_nodes(dag, u, z, w)
    if not u or not w:
        return True

    conditioned_ancestry = _ancestors_of(dag, z)

    # State (node, moving_up): moving_up means the node was entered from
    # one of its children.
    queue: deque[tuple[Node, bool]] = deque((node, True) for node in u)
    seen = set(queue)

    def push(node: Node, moving_up: bool) -> None:
        state = (node, moving_up)
        if state not in seen:
            seen.add(state)
            queue.append(state)

    while queue:
        node, moving_up = queue.popleft()
        if node in w:
            return False
        if moving_up and node not in z:
            for parent in dag.parents_of(node):
                push(parent, True)
            for child in dag.children_of(node):
                push(child, False)
        elif not moving_up:
            if node not in z:
                for child in dag.children_of(node):
                    push(child, False)
            if node in conditioned_ancestry:
                for parent in dag.parents_of(node):
                    push(parent, True)
    return True
