"""Structure-recovery algorithms against exact oracles.

Covers: graph container invariants and serialization; adaptive pruning and
edgewise construction recovering known parent maps (independent, coupled,
and XOR-style systems); equivalence of the two constructions on random
positive models; in-degree-bounded recovery including its query budget,
diagnostics, and failure modes under a wrong bound; model verification
as the minimality check; query-count accounting; memoization; and
parallel-equals-sequential behavior.
"""

import itertools
import json
import math
import warnings

import numpy as np
import pytest

from conftest import (
    chain_model,
    coupled_triple_model,
    positive_model_corpus,
)
from dirinfo import (
    Alphabet,
    DirectedGraph,
    ExactDIOracle,
    GenerativeModel,
    RecoveryDiagnosticWarning,
    bounded_recovery,
    causal_markov_boundary,
    di_construct,
    enumerate_joint,
    graph_from_json,
    graph_to_dot,
    graph_to_json,
    mgm_construct,
    random_generative_model,
    structure_recovery_bounded,
    verify_generative_model,
    xor_system,
)


def exact_oracle(model):
    return ExactDIOracle(enumerate_joint(model))


def independent_model(m=3, n=2, seed=0):
    return random_generative_model(m, n, [2] * m, 0, 0.1, seed)


def symmetric_or_model(flip=0.1, n=2):
    """Processes 0 and 1 are iid fair; process 2 is their OR, noisily.

    The two parents carry identical marginal information about the target
    by symmetry, which forces a tie between the singleton source blocks.
    """
    fair = np.array([0.5, 0.5])
    table = np.empty((2, 2, 2, 2))  # (0_prev, 1_prev, 2_prev, 2_new)
    for a, b, own in itertools.product(range(2), repeat=3):
        bit = a | b
        table[a, b, own] = [1.0 - flip, flip] if bit == 0 else [flip, 1.0 - flip]
    z_tables = [fair] + [table for _ in range(n - 1)]
    iid = [fair] + [np.tile(fair, (2, 1)) for _ in range(n - 1)]
    return GenerativeModel(
        m=3,
        n=n,
        alphabets=(Alphabet(2),) * 3,
        parents=(frozenset(), frozenset(), frozenset({0, 1})),
        window=1,
        tables=(tuple(iid), tuple(iid), tuple(z_tables)),
    )


# == 1. graph container ==


class TestDirectedGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            DirectedGraph(m=2, parents=(frozenset({0}), frozenset()))

    def test_rejects_out_of_range_parent(self):
        with pytest.raises(ValueError):
            DirectedGraph(m=2, parents=(frozenset({5}), frozenset()))

    def test_cycles_are_permitted(self):
        g = DirectedGraph.from_parent_map(2, {0: {1}, 1: {0}})
        assert g.has_edge(0, 1) and g.has_edge(1, 0)

    def test_edges_sorted_pairs(self):
        g = DirectedGraph.from_parent_map(3, {2: {0, 1}, 1: {0}})
        assert g.edges() == ((0, 1), (0, 2), (1, 2))

    def test_json_round_trip(self):
        g = DirectedGraph.from_parent_map(4, {0: {3}, 2: {1, 3}})
        payload = graph_to_json(g)
        assert graph_from_json(json.loads(json.dumps(payload))) == g

    def test_dot_output_shape(self):
        g = DirectedGraph.from_parent_map(2, {1: {0}})
        dot = graph_to_dot(g, edge_labels={(0, 1): 0.12345})
        assert 'label="0.123"' in dot
        assert "n0 -> n1" in dot
        assert dot.startswith("digraph")

    def test_dot_without_labels(self):
        g = DirectedGraph.from_parent_map(2, {1: {0}})
        assert "label=" not in graph_to_dot(g).split("\n")[3]


# == 2. adaptive pruning ==


class TestAdaptivePruning:
    def test_independent_processes_empty_graph(self):
        model = independent_model()
        g = mgm_construct(exact_oracle(model), model.m)
        assert g.edges() == ()

    def test_coupled_triple_parent_sets(self):
        model = coupled_triple_model()
        g = mgm_construct(exact_oracle(model), model.m)
        assert g.parents == (frozenset({1}), frozenset({0}), frozenset({1}))

    def test_xor_parents_found_despite_zero_marginal_flow(self):
        model = xor_system(0.1, 3)
        oracle = exact_oracle(model)
        g = mgm_construct(oracle, model.m)
        assert g.parents[2] == frozenset({0, 1})
        assert g.parents[3] == frozenset({0, 1})

    def test_query_count_is_m_times_m_minus_one(self):
        for model, _ in positive_model_corpus(4, start_seed=10):
            oracle = exact_oracle(model)
            mgm_construct(oracle, model.m)
            assert oracle.query_count == model.m * (model.m - 1)

    def test_scan_order_independence(self):
        model, truth = next(iter(positive_model_corpus(1, start_seed=3)))
        oracle = exact_oracle(model)
        m = model.m
        for i in range(m):
            others = [k for k in range(m) if k != i]
            boundaries = {
                causal_markov_boundary(oracle, i, m, order=list(perm))
                for perm in itertools.permutations(others)
            }
            assert boundaries == {truth.parents[i]}


# == 3. edgewise construction ==


class TestEdgewiseConstruction:
    def test_independent_processes_empty_graph(self):
        model = independent_model(seed=1)
        assert di_construct(exact_oracle(model), model.m).edges() == ()

    def test_equals_adaptive_pruning_on_random_models(self):
        for model, truth in positive_model_corpus(6, start_seed=20):
            joint = enumerate_joint(model)
            a = mgm_construct(ExactDIOracle(joint), model.m)
            b = di_construct(ExactDIOracle(joint), model.m)
            assert a == b == truth

    def test_query_count_and_conditioning_width(self):
        model, _ = next(iter(positive_model_corpus(1, start_seed=5)))
        oracle = exact_oracle(model)
        di_construct(oracle, model.m)
        assert oracle.query_count == model.m * (model.m - 1)
        assert all(
            len(rec.conditioning) == model.m - 2 for rec in oracle.query_log
        )


# == 4. bounded-in-degree recovery ==


class TestBoundedRecovery:
    def test_chain_with_unit_bound(self):
        model = chain_model(0.1, 3)
        result = bounded_recovery(exact_oracle(model), 3, 1, delta=0.0)
        assert result.graph.parents == (frozenset(), frozenset({0}), frozenset({1}))
        (detail,) = [d for d in result.details if d.target == 2]
        assert detail.maximal == (frozenset({1}),)

    def test_six_process_pairwise_budget(self):
        model = random_generative_model(6, 2, [2] * 6, 2, 0.1, 42)
        oracle = exact_oracle(model)
        result = bounded_recovery(oracle, 6, 2, delta=0.0)
        assert result.graph.parents == tuple(model.parents)
        per_target = {i: 0 for i in range(6)}
        for rec in oracle.query_log:
            per_target[rec.target] += 1
            assert len(rec.sources) == 2
            assert len(rec.conditioning) == 0
        assert all(count == math.comb(5, 2) == 10 for count in per_target.values())

    def test_total_query_count_matches_binomial_sum(self):
        for model, _ in positive_model_corpus(3, start_seed=30, max_in_degree=1):
            oracle = exact_oracle(model)
            bounded_recovery(oracle, model.m, 1, delta=0.0)
            assert oracle.query_count == model.m * math.comb(model.m - 1, 1)

    def test_per_node_bounds_accepted_as_mapping_and_callable(self):
        model = chain_model(0.1, 3)
        joint = enumerate_joint(model)
        base = bounded_recovery(ExactDIOracle(joint), 3, 1, delta=0.0).graph
        by_map = bounded_recovery(
            ExactDIOracle(joint), 3, {0: 1, 1: 1, 2: 1}, delta=0.0
        ).graph
        by_fn = bounded_recovery(
            ExactDIOracle(joint), 3, lambda i: 1, delta=0.0
        ).graph
        assert base == by_map == by_fn

    def test_bound_above_m_minus_two_rejected(self):
        model = chain_model(0.1, 3)
        with pytest.raises(ValueError):
            bounded_recovery(exact_oracle(model), 3, 2, delta=0.0)

    def test_wrong_bound_on_xor_detected_by_verification(self):
        model = xor_system(0.1, 3)
        joint = enumerate_joint(model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RecoveryDiagnosticWarning)
            result = bounded_recovery(ExactDIOracle(joint), 4, 1, delta=0.05)
        assert result.graph.parents[2] != frozenset({0, 1})
        assert not verify_generative_model(joint, result.graph)

    def test_empty_intersection_emits_diagnostic(self):
        model = symmetric_or_model()
        with pytest.warns(RecoveryDiagnosticWarning, match="node 2"):
            result = bounded_recovery(exact_oracle(model), 3, 1, delta=0.05)
        (detail,) = [d for d in result.details if d.target == 2]
        assert detail.empty_intersection
        assert set(detail.maximal) == {frozenset({0}), frozenset({1})}
        assert detail.parents == frozenset()

    def test_graph_only_wrapper_matches(self):
        model = chain_model(0.1, 3)
        joint = enumerate_joint(model)
        assert structure_recovery_bounded(
            ExactDIOracle(joint), 3, 1, delta=0.0
        ) == bounded_recovery(ExactDIOracle(joint), 3, 1, delta=0.0).graph

    def test_delta_validation(self):
        model = chain_model(0.1, 3)
        with pytest.raises(ValueError):
            bounded_recovery(exact_oracle(model), 3, 1, delta=1.0)


# == 5. model verification ==


class TestModelVerification:
    def test_true_graph_accepted(self):
        for model, truth in positive_model_corpus(4, start_seed=40):
            assert verify_generative_model(enumerate_joint(model), truth)

    def test_removing_any_true_edge_rejected(self):
        model, truth = next(iter(positive_model_corpus(1, start_seed=41)))
        joint = enumerate_joint(model)
        for k, i in truth.edges():
            pruned = {
                j: set(truth.parents[j]) - ({k} if j == i else set())
                for j in range(truth.m)
            }
            g = DirectedGraph.from_parent_map(truth.m, pruned)
            assert not verify_generative_model(joint, g)

    def test_superfluous_edge_still_accepted(self):
        model = chain_model(0.1, 3)
        joint = enumerate_joint(model)
        padded = DirectedGraph.from_parent_map(3, {1: {0}, 2: {0, 1}})
        assert verify_generative_model(joint, padded)


# == 6. per-node boundaries ==


class TestCausalMarkovBoundary:
    def test_coupled_triple_boundary(self):
        model = coupled_triple_model()
        assert causal_markov_boundary(exact_oracle(model), 2, 3) == frozenset({1})

    def test_independent_node_has_empty_boundary(self):
        model = independent_model(seed=2)
        assert causal_markov_boundary(exact_oracle(model), 0, 3) == frozenset()

    def test_xor_target_boundary(self):
        model = xor_system(0.1, 3)
        assert causal_markov_boundary(exact_oracle(model), 2, 4) == frozenset({0, 1})


# == 7. oracle bookkeeping ==


class TestOracleBehavior:
    def test_memoized_queries_marked_cached(self):
        model = chain_model(0.1, 3)
        oracle = exact_oracle(model)
        di_construct(oracle, 3)
        di_construct(oracle, 3)
        log = oracle.query_log
        assert len(log) == 12
        assert not any(rec.cached for rec in log[:6])
        assert all(rec.cached for rec in log[6:])
        by_key = {}
        for rec in log:
            key = (rec.sources, rec.target, rec.conditioning)
            by_key.setdefault(key, set()).add(rec.value)
        assert all(len(values) == 1 for values in by_key.values())

    def test_reset_log_keeps_memo(self):
        model = chain_model(0.1, 3)
        oracle = exact_oracle(model)
        di_construct(oracle, 3)
        oracle.reset_log()
        assert oracle.query_count == 0
        di_construct(oracle, 3)
        assert all(rec.cached for rec in oracle.query_log)

    def test_size_accounting_helpers(self):
        model = xor_system(0.1, 3)
        oracle = exact_oracle(model)
        bounded_recovery(oracle, 4, 2, delta=0.0)
        assert oracle.max_source_size() == 2
        assert oracle.max_conditioning_size() == 0


# == 8. parallel execution ==


class TestParallelEquivalence:
    @pytest.mark.parametrize("jobs", [2, 4])
    def test_all_algorithms_match_sequential(self, jobs):
        model, truth = next(iter(positive_model_corpus(1, start_seed=50)))
        joint = enumerate_joint(model)
        m = model.m
        assert mgm_construct(ExactDIOracle(joint), m, jobs=jobs) == truth
        assert di_construct(ExactDIOracle(joint), m, jobs=jobs) == truth
        seq = bounded_recovery(ExactDIOracle(joint), m, 1, delta=0.0, jobs=1)
        par = bounded_recovery(ExactDIOracle(joint), m, 1, delta=0.0, jobs=jobs)
        assert seq.graph == par.graph
