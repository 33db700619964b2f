"""Shared helpers for building small random positive models in tests."""

import numpy as np

from dirinfo import (
    Alphabet,
    DirectedGraph,
    GenerativeModel,
    UnrolledDag,
    random_generative_model,
)


def context_slots(parents, process, time, window):
    lo = max(0, time - window)
    members = sorted(set(parents) | {process})
    return [(p, t) for p in members for t in range(lo, time)]


def random_model(rng, m, n, *, sizes=None, window=1, parents=None, low=0.05):
    """Random strictly positive model with the given shape.

    Rows are drawn uniformly from ``[low, 1]`` and normalized, so every
    conditional probability is bounded away from zero.
    """
    sizes = [2] * m if sizes is None else list(sizes)
    if parents is None:
        parents = []
        for i in range(m):
            others = [p for p in range(m) if p != i]
            k = int(rng.integers(0, len(others) + 1)) if others else 0
            chosen = rng.choice(others, size=k, replace=False) if k else []
            parents.append(frozenset(int(p) for p in chosen))
    parents = [frozenset(ps) for ps in parents]

    tables = []
    for i in range(m):
        group = []
        for j in range(n):
            slots = context_slots(parents[i], i, j, window)
            shape = tuple(sizes[p] for p, _ in slots) + (sizes[i],)
            raw = rng.uniform(low, 1.0, size=shape)
            group.append(raw / raw.sum(axis=-1, keepdims=True))
        tables.append(tuple(group))

    return GenerativeModel(
        m=m,
        n=n,
        alphabets=tuple(Alphabet(s) for s in sizes),
        parents=tuple(parents),
        window=window,
        tables=tuple(tables),
    )


def chain_model(flip=0.1, n=3):
    """Three binary processes in a causal chain 0 -> 1 -> 2.

    Process 0 is iid fair; process 1 copies process 0's previous symbol
    with flip probability ``flip``; process 2 copies process 1 the same
    way.  There is no direct 0 -> 2 influence.
    """
    fair = np.array([0.5, 0.5])
    copy = np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])
    noisy = np.stack([copy, copy], axis=1)  # (parent_prev, own_prev, own_new)
    x_tables = [fair] + [np.tile(fair, (2, 1)) for _ in range(n - 1)]
    w_tables = [fair] + [noisy for _ in range(n - 1)]
    y_tables = [fair] + [noisy for _ in range(n - 1)]
    return GenerativeModel(
        m=3,
        n=n,
        alphabets=(Alphabet(2), Alphabet(2), Alphabet(2)),
        parents=(frozenset(), frozenset({0}), frozenset({1})),
        window=1,
        tables=(tuple(x_tables), tuple(w_tables), tuple(y_tables)),
    )


def coupled_triple_model(flip=0.1, n=3):
    """Three binary processes with mutual coupling 0 <-> 1 and edge 1 -> 2.

    Process 0 copies process 1's previous symbol with flip probability
    ``flip`` and vice versa; process 2 copies process 1 the same way.
    Parent sets: A(0) = {1}, A(1) = {0}, A(2) = {1}.
    """
    fair = np.array([0.5, 0.5])
    copy = np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])
    # axes are (parent_prev, own_prev, own_new); copying ignores own past.
    parent_first = np.stack([copy, copy], axis=1)
    own_first = np.stack([copy, copy], axis=0)
    x_tables = [fair] + [own_first for _ in range(n - 1)]     # ctx (0_prev, 1_prev)
    y_tables = [fair] + [parent_first for _ in range(n - 1)]  # ctx (0_prev, 1_prev)
    z_tables = [fair] + [parent_first for _ in range(n - 1)]  # ctx (1_prev, 2_prev)
    return GenerativeModel(
        m=3,
        n=n,
        alphabets=(Alphabet(2), Alphabet(2), Alphabet(2)),
        parents=(frozenset({1}), frozenset({0}), frozenset({1})),
        window=1,
        tables=(tuple(x_tables), tuple(y_tables), tuple(z_tables)),
    )


def five_node_demo_graph():
    """Five-process influence graph exercising the blocking-query examples.

    Edges: A->B, B->C, D->C, D->A, C->E with the usual letter order
    A=0 .. E=4.  The node pair (E, C) witnesses the asymmetry of the
    blocking criterion: E is separated from C by the empty set while C is
    not separated from E.
    """
    return DirectedGraph.from_parent_map(5, {0: {3}, 1: {0}, 2: {1, 3}, 4: {2}})


def fork_dag():
    """Variable-level DAG with a collider and a fork.

    Four processes observed at two times; Y = (2,1) has parents W = (0,0)
    and X = (1,0), and Z = (3,1) has the single parent W.  Classic
    d-separation facts: Z and Y are separated by W, X and W are separated
    by the empty set, but conditioning on the collider Y connects X and W.
    """
    return UnrolledDag(
        m=4,
        n=2,
        parents={(2, 1): {(0, 0), (1, 0)}, (3, 1): {(0, 0)}},
    )


def positive_model_corpus(count, *, start_seed=0, max_in_degree=None, dims=None):
    """Deterministic stream of random positive models with recoverable edges.

    Cycles through binary shapes m in {3, 4} x n in {2, 3} (or the given
    ``dims``), one model per seed.  Yields (model, true_graph) pairs.
    """
    shapes = tuple(dims) if dims else tuple(
        (m, n) for m in (3, 4) for n in (2, 3)
    )
    for idx in range(count):
        m, n = shapes[idx % len(shapes)]
        cap = m - 1 if max_in_degree is None else min(max_in_degree, m - 1)
        model = random_generative_model(m, n, [2] * m, cap, 0.1, start_seed + idx)
        graph = DirectedGraph(m=m, parents=tuple(model.parents))
        yield model, graph


def noisy_copy_model(flip=0.1, n=2):
    """Two binary processes: X is iid fair, Y copies X's previous symbol
    and flips it with probability ``flip``.  Y's tables carry the own-past
    axis their context demands but do not depend on it.
    """
    fair = np.array([0.5, 0.5])
    x_tables = [fair] + [np.tile(fair, (2, 1)) for _ in range(n - 1)]
    copy = np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])
    y_tables = [fair]
    for _ in range(n - 1):
        # axes: (x_prev, y_prev, y_new); independent of y_prev.
        y_tables.append(np.stack([copy, copy], axis=1))
    return GenerativeModel(
        m=2,
        n=n,
        alphabets=(Alphabet(2), Alphabet(2)),
        parents=(frozenset(), frozenset({0})),
        window=1,
        tables=(tuple(x_tables), tuple(y_tables)),
    )
