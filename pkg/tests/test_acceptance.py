"""End-to-end acceptance gates for the influence-structure pipeline.

One test per gate, each printing a distinct PASS line with the measured
numbers:

* adaptive and edgewise construction both reproduce the generating
  parent map exactly on a 100-model positive corpus, within budget;
* bounded-in-degree recovery is exact with delta 0 while touching only
  source blocks of the promised size (no conditioning);
* enlarging a source set never reduces exact influence, with equality
  against the full complement exactly when the set covers the parents;
* the XOR network shows the masked/induced influence pattern at the
  stated zero and positivity tolerances;
* cumulative prediction-loss reduction of the optimal sequential
  predictor, computed directly from conditional tables, equals the
  influence value to numerical precision;
* blocking statements certify (near-)zero influence, and deleting any
  true edge yields a statement that the pruned graph asserts but the
  distribution violates;
* the six-process demo network is recovered from sampled spikes within
  the stated edge-decision error budgets at two sample sizes;
* independent processes stay below the decision threshold in almost
  all trials, and every fit converges with a tiny gradient norm.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import positive_model_corpus
from dirinfo import (
    DirectedGraph,
    ExactDIOracle,
    ProcessSelector,
    SimConfig,
    bounded_recovery,
    c_separates,
    cc_directed_information,
    di_construct,
    enumerate_joint,
    make_estimated_oracle,
    marginal_conditional,
    mgm_construct,
    simulate_glm_network,
    six_process_demo_config,
    xor_system,
)

EXACT_EPS = 1e-9
CORPUS_SEED = 100
CORPUS_SIZE = 100


@pytest.fixture(scope="module")
def corpus():
    """The shared 100-model positive corpus with enumerated joints."""
    entries = []
    for model, truth in positive_model_corpus(CORPUS_SIZE, start_seed=CORPUS_SEED):
        entries.append((model, truth, enumerate_joint(model)))
    return entries


def edge_decision_errors(recovered: DirectedGraph, truth: DirectedGraph) -> int:
    m = truth.m
    return sum(
        recovered.has_edge(k, i) != truth.has_edge(k, i)
        for k, i in itertools.permutations(range(m), 2)
    )


def predictor_regret(joint, sel: ProcessSelector) -> float:
    """Expected cumulative log-loss reduction, in bits, of the optimal
    sequential predictor of the target when the sources' past is added
    to the target's own and the conditioning set's past.  Computed
    directly from conditional tables, independent of the entropy-based
    influence engine."""
    i = sel.target
    total = 0.0
    for j in range(joint.n):
        def past(procs):
            return [(p, t) for p in sorted(procs) for t in range(j)]

        base_slots = tuple(sorted(past({i} | set(sel.conditioning))))
        full_slots = tuple(sorted(past({i} | set(sel.conditioning) | set(sel.sources))))
        if base_slots == full_slots:
            continue
        with_table = marginal_conditional(joint, (i, j), full_slots)
        without_table = marginal_conditional(joint, (i, j), base_slots)
        context_probs = joint.marginal(full_slots)
        keep = [full_slots.index(s) for s in base_slots]
        for context, pmf_with in with_table.probs.items():
            weight = float(context_probs[tuple(context)])
            pmf_without = without_table.pmf(tuple(context[k] for k in keep))
            mask = pmf_with > 0
            total += weight * float(
                np.sum(pmf_with[mask] * np.log2(pmf_with[mask] / pmf_without[mask]))
            )
    return total


# == 1. exact construction equivalence ==


def test_construction_algorithms_match_generating_structure(corpus):
    started = time.monotonic()
    disagreements = 0
    for model, truth, joint in corpus:
        adaptive = mgm_construct(ExactDIOracle(joint), model.m, eps=EXACT_EPS)
        edgewise = di_construct(ExactDIOracle(joint), model.m, eps=EXACT_EPS)
        if adaptive != truth or edgewise != truth:
            disagreements += 1
    elapsed = time.monotonic() - started
    assert len(corpus) >= 100
    assert disagreements == 0
    assert elapsed < 120.0
    print(
        f"PASS construction equivalence: {len(corpus)} models, "
        f"0 edge disagreements, {elapsed:.1f}s"
    )


# == 2. bounded-degree recovery from low-order statistics ==


def test_bounded_recovery_is_exact_with_small_source_blocks():
    checked = 0
    for bound, dims, seed in (
        (1, None, 210),
        (2, ((4, 2), (4, 3)), 220),
    ):
        stream = positive_model_corpus(
            50, start_seed=seed, max_in_degree=bound, dims=dims
        )
        for model, truth in stream:
            oracle = ExactDIOracle(enumerate_joint(model))
            result = bounded_recovery(
                oracle, model.m, bound, delta=0.0, eps=EXACT_EPS
            )
            assert result.graph == truth
            assert all(len(rec.sources) == bound for rec in oracle.query_log)
            assert all(len(rec.conditioning) == 0 for rec in oracle.query_log)
            checked += 1
    assert checked == 100
    print(
        f"PASS bounded recovery: {checked} models exact at delta=0, "
        f"all queries used source blocks of the promised size only"
    )


# == 3. monotonicity of influence in the source set ==


def test_wider_source_sets_never_lose_influence(corpus):
    nodes = 0
    for model, truth, joint in corpus:
        m = model.m
        for i in range(m):
            others = sorted(set(range(m)) - {i})
            parents = truth.parents[i]
            values = {}
            for r in range(len(others) + 1):
                for combo in itertools.combinations(others, r):
                    sel = ProcessSelector(sources=frozenset(combo), target=i)
                    values[frozenset(combo)] = cc_directed_information(
                        joint, sel
                    ).value
            reference = values[frozenset(others)]
            for w, value in values.items():
                for b, bigger in values.items():
                    if parents <= b:
                        assert value <= bigger + 1e-9
                if parents <= w:
                    assert abs(value - reference) <= 1e-6
                else:
                    assert reference - value > 1e-6
            nodes += 1
    print(
        f"PASS influence monotonicity: {nodes} nodes, every source set "
        f"bounded by every parent-covering set, equality iff parents covered"
    )


# == 4. XOR masking and induced influence ==


def test_xor_gate_shows_masked_and_induced_influence():
    joint = enumerate_joint(xor_system(0.1, 3))

    def value(sources, target, conditioning=()):
        sel = ProcessSelector(
            sources=frozenset(sources),
            target=target,
            conditioning=frozenset(conditioning),
        )
        return cc_directed_information(joint, sel).value

    masked_source = value({0}, 3)
    revealed_source = value({0}, 3, {1, 2})
    induced_relay = value({2}, 3)
    explained_relay = value({2}, 3, {0, 1})
    assert masked_source <= 1e-9
    assert revealed_source >= 1e-3
    assert induced_relay >= 1e-3
    assert explained_relay <= 1e-9
    print(
        f"PASS xor pattern: masked source {masked_source:.2e}, revealed "
        f"{revealed_source:.3f}, induced relay {induced_relay:.3f}, "
        f"explained relay {explained_relay:.2e} (bits)"
    )


# == 5. influence equals prediction-loss reduction ==


def test_influence_equals_prediction_loss_reduction():
    checked = 0
    worst = 0.0
    for model, _ in positive_model_corpus(20, start_seed=300):
        joint = enumerate_joint(model)
        m = model.m
        for i in range(m):
            others = tuple(sorted(set(range(m)) - {i}))
            selectors = [
                ProcessSelector(sources=frozenset(others), target=i),
                ProcessSelector(
                    sources=frozenset({others[0]}),
                    target=i,
                    conditioning=frozenset(others[1:]),
                ),
            ]
            for sel in selectors:
                direct = predictor_regret(joint, sel)
                engine = cc_directed_information(joint, sel).value
                worst = max(worst, abs(direct - engine))
                assert abs(direct - engine) <= 1e-9
                checked += 1
    print(
        f"PASS prediction identity: {checked} selector checks on 20 models, "
        f"max |regret - influence| = {worst:.2e} bits"
    )


# == 6. blocking statements against the distribution ==


def test_blocking_certifies_zero_influence_and_detects_deletions(corpus):
    separated_checked = 0
    deletions_checked = 0
    for model, truth, joint in corpus:
        m = model.m
        for u, w in itertools.permutations(range(m), 2):
            rest = sorted(set(range(m)) - {u, w})
            for size in range(min(2, len(rest)) + 1):
                for z in itertools.combinations(rest, size):
                    if not c_separates(truth, {u}, set(z), {w}):
                        continue
                    sel = ProcessSelector(
                        sources=frozenset({u}),
                        target=w,
                        conditioning=frozenset(z),
                    )
                    assert cc_directed_information(joint, sel).value <= 1e-9
                    separated_checked += 1
        for k, i in truth.edges():
            pruned = DirectedGraph.from_parent_map(
                m,
                {
                    node: set(truth.parents[node]) - ({k} if node == i else set())
                    for node in range(m)
                },
            )
            rest = frozenset(range(m)) - {k, i}
            assert c_separates(pruned, {k}, rest, {i})
            sel = ProcessSelector(
                sources=frozenset({k}), target=i, conditioning=rest
            )
            assert cc_directed_information(joint, sel).value > 1e-9
            deletions_checked += 1
    assert separated_checked > 0 and deletions_checked > 0
    print(
        f"PASS blocking statements: {separated_checked} true separations all "
        f"within 1e-9 bits of zero; {deletions_checked} edge deletions each "
        f"produced a violated statement"
    )


# == 7. demo network recovery error budget ==


def _demo_network_errors(n: int):
    cfg = six_process_demo_config(n=n)
    panel, _ = simulate_glm_network(cfg)
    truth = DirectedGraph.from_parent_map(cfg.m, cfg.parents)

    edgewise_oracle = make_estimated_oracle(panel, window=cfg.window)
    edgewise = di_construct(edgewise_oracle, cfg.m, eps=0.05)
    bounded_oracle = make_estimated_oracle(panel, window=cfg.window)
    bounded = bounded_recovery(bounded_oracle, cfg.m, 3, delta=0.05, eps=0.05)

    reports = edgewise_oracle.fit_reports() + bounded_oracle.fit_reports()
    for report in reports:
        assert report.converged
        assert report.gradient_norm <= 1e-6
    return (
        edge_decision_errors(edgewise, truth),
        edge_decision_errors(bounded.graph, truth),
    )


def test_demo_network_recovery_error_budget():
    started = time.monotonic()
    edgewise_small, bounded_small = _demo_network_errors(200_000)
    small_elapsed = time.monotonic() - started
    assert edgewise_small <= 3
    assert bounded_small <= 4
    assert small_elapsed <= 900.0

    edgewise_large, bounded_large = _demo_network_errors(600_000)
    assert edgewise_large <= 2
    assert bounded_large <= 3
    print(
        f"PASS demo network: errors/30 edgewise {edgewise_small} then "
        f"{edgewise_large}, bounded {bounded_small} then {bounded_large} "
        f"(budgets 3/4 and 2/3); first run {small_elapsed:.0f}s"
    )


# == 8. independent processes stay below threshold ==


def test_independent_processes_stay_below_threshold():
    trials = 20
    quiet_trials = 0
    worst = 0.0
    gradient_worst = 0.0
    for trial in range(trials):
        cfg = SimConfig(
            m=3,
            n=100_000,
            parents={},
            seed=900 + trial,
            window=3,
            baseline_rate=25.0,
        )
        panel, _ = simulate_glm_network(cfg)
        oracle = make_estimated_oracle(panel, window=5)
        recovered = di_construct(oracle, cfg.m, eps=0.05)
        rates = [record.value for record in oracle.query_log]
        assert len(rates) == 6
        peak = max(rates)
        worst = max(worst, peak)
        if peak < 0.05:
            quiet_trials += 1
            assert recovered.edges() == ()
        for report in oracle.fit_reports():
            assert report.converged
            gradient_worst = max(gradient_worst, report.gradient_norm)
            assert report.gradient_norm <= 1e-6
    assert quiet_trials >= 19
    print(
        f"PASS estimator sanity: {quiet_trials}/{trials} trials fully below "
        f"the 5% threshold (worst rate {worst:.4f}); every fit converged "
        f"with gradient norm <= {gradient_worst:.1e}"
    )
