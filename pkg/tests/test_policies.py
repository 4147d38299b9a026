import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import table_instance
from regsub.core import EMPTY, enumerate_realizations
from regsub.evaluation import evaluate_concatenation_exact, evaluate_exact
from regsub.instances import gen_coverage
from regsub.objective import distorted_marginal
from regsub.oracle_dp import TreePolicy, optimal_policy
from regsub.policies import (
    DistortedGreedy,
    EmptyPolicy,
    Environment,
    FixedSequencePolicy,
    PolicySpec,
    RandomDistortedGreedy,
    UnsupportedEvaluationError,
    augment_with_dummies,
    concatenate,
    run_distorted_greedy,
    run_linear_time,
    run_policy,
    run_random_distorted_greedy,
    sample_size,
    selection_distribution,
    top_k_set,
    truncate,
)

A, B = 0, 1


def test_augment_sizes(demo):
    assert augment_with_dummies(demo, 1).size == demo.n + 1
    k = 4
    assert augment_with_dummies(demo, k - 1).size == demo.n + k - 1
    with pytest.raises(ValueError):
        augment_with_dummies(demo, 0)


def test_augment_twice_adds_up(demo):
    twice = augment_with_dummies(augment_with_dummies(demo, 1), 1)
    assert twice == augment_with_dummies(demo, 2)
    assert twice.size == demo.n + 2


def test_augment_keeps_original_untouched(demo):
    aug = augment_with_dummies(demo, 2)
    assert demo.dummy_count == 0 and aug.dummy_count == 2
    assert aug.costs == demo.costs


def test_distorted_greedy_on_demo(demo):
    aug = augment_with_dummies(demo, 1)
    for states in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        trace = run_distorted_greedy(aug, 2, Environment(states))
        assert trace.items == [A, B]
        assert trace.selected == {A, B}
        assert trace.oracle_queries == 3  # 2 reals at step 0, 1 at step 1


def test_distorted_greedy_requires_dummy(demo):
    with pytest.raises(ValueError, match="dummy"):
        run_distorted_greedy(demo, 2, Environment((0, 0)))


def test_all_negative_h_picks_dummy():
    inst = augment_with_dummies(table_instance(((0.0,), (0.1,), (0.1,), (0.2,)), (0.5, 0.5)), 1)
    trace = run_distorted_greedy(inst, 2, Environment((0, 0)))
    assert trace.steps[0].item == inst.n
    assert trace.steps[0].state is None
    assert trace.selected == frozenset()
    assert trace.objective == 0.0


def test_sample_size_examples():
    assert sample_size(10, 2, 0.1, 100) == 12
    assert sample_size(10, 2, 0.1, 7) == 7
    assert sample_size(10, 2, 1 - 1e-12, 100) == 1


def test_linear_time_validation(demo):
    aug = augment_with_dummies(demo, 1)
    with pytest.raises(ValueError):
        run_linear_time(aug, 2, 1.0, 0, Environment((0, 0)))
    with pytest.raises(ValueError):
        PolicySpec("ltdg", 2, 0.0)
    with pytest.raises(ValueError):
        PolicySpec("ltdg", 2)


def test_linear_time_full_sample_matches_greedy():
    inst = gen_coverage(6, 4)
    aug = augment_with_dummies(inst, 2)
    rng = np.random.default_rng(0)
    for seed in range(10):
        env = Environment(inst.prior.sample(rng, 1)[0])
        lt = run_linear_time(aug, 3, 1e-6, seed, env)
        dg = run_distorted_greedy(aug, 3, env)
        assert [(s.item, s.state, s.h) for s in lt.steps] == [(s.item, s.state, s.h) for s in dg.steps]


def test_linear_time_records_sample_and_queries():
    inst = augment_with_dummies(gen_coverage(10, 1), 1)
    trace = run_linear_time(inst, 2, 0.5, 3, Environment((1,) * 10))
    s = sample_size(10, 2, 0.5, inst.size)
    for step in trace.steps:
        assert len(step.pool) == s
        assert step.item in step.pool or step.h == 0.0
        assert step.queries == sum(1 for e in step.pool if e < inst.n)
    assert trace.oracle_queries <= s * 2


def test_linear_time_never_takes_negative_step():
    # costly items: any sample that misses the dummy still must not pay
    inst = augment_with_dummies(table_instance(((0.0,), (0.1,), (0.1,), (0.2,)), (0.5, 0.5)), 1)
    for seed in range(20):
        trace = run_linear_time(inst, 2, 0.9, seed, Environment((0, 0)))
        assert trace.selected == frozenset()


def test_top_k_set_examples(demo):
    aug = augment_with_dummies(demo, 1)
    items, h = top_k_set(EMPTY, 0, 2, aug)
    assert set(items.tolist()) == {A, B}
    assert h.tolist() == pytest.approx([0.15, 0.10])
    # k = 1: the single argmax, i.e. distorted greedy's pick
    one, _ = top_k_set(EMPTY, 0, 1, aug)
    assert one.tolist() == [B]  # undistorted at k = 1: 1.0 - 0.4 beats 0.5 - 0.1
    assert run_distorted_greedy(aug, 1, Environment((0, 0))).items == one.tolist()


def test_top_k_set_drops_negative_items():
    # every real item has negative H: only the dummies remain
    base = table_instance(((0.0,), (0.1,), (0.1,), (0.2,)), (0.5, 0.5))
    aug = augment_with_dummies(base, 2)
    items, h = top_k_set(EMPTY, 0, 3, aug)
    assert items.tolist() == [2, 3]
    assert (h == 0).all()


def test_random_distorted_greedy_k1_equals_greedy():
    inst = gen_coverage(5, 9)
    aug = augment_with_dummies(inst, 1)
    for states in [(0,) * 5, (1,) * 5, (1, 0, 1, 0, 1)]:
        env = Environment(states)
        rdg = run_random_distorted_greedy(aug, 1, 7, env)
        dg = run_distorted_greedy(aug, 1, env)
        assert [s[:4] for s in rdg.steps] == [s[:4] for s in dg.steps]


def test_random_distorted_greedy_determinism():
    inst = augment_with_dummies(gen_coverage(6, 2), 2)
    env = Environment((1, 0, 1, 1, 0, 1))
    a = run_random_distorted_greedy(inst, 3, 11, env)
    b = run_random_distorted_greedy(inst, 3, 11, env)
    assert a == b
    for step in a.steps:
        assert step.item in step.pool


def test_random_distorted_greedy_law_on_demo(demo):
    law = selection_distribution(RandomDistortedGreedy(2), demo, (1, 1))
    # a first: then b or the dummy; b first (b=1): dummy only
    assert law == pytest.approx({frozenset({A, B}): 0.25, frozenset({A}): 0.25, frozenset({B}): 0.5})


def test_concatenation_examples(demo):
    env = Environment((1, 0))
    t1, t2, sel = concatenate(FixedSequencePolicy([B]), EmptyPolicy()).run(demo, env)
    assert sel == t1.selected == {B}
    _, _, sel = concatenate(FixedSequencePolicy([A]), FixedSequencePolicy([A])).run(demo, env)
    assert sel == {A}


def test_truncation_examples(demo):
    spec = PolicySpec("dg", 2)
    assert evaluate_exact(truncate(spec, 0), demo).objective == 0.0
    assert evaluate_exact(truncate(spec, 2), demo) == evaluate_exact(spec, demo)
    trace = run_policy(truncate(spec, 1), demo, Environment((1, 1)))
    assert trace.selected == {A}
    with pytest.raises(ValueError):
        truncate(spec, 3)
    with pytest.raises(ValueError):
        truncate(DistortedGreedy(2), 3)


def test_linear_time_has_no_exact_law(demo):
    with pytest.raises(UnsupportedEvaluationError, match="Monte Carlo"):
        evaluate_exact(PolicySpec("ltdg", 2, 0.1), demo)


def test_negated_hook_reverses_choice(demo):
    trace = run_policy(PolicySpec("dg", 1, negate=True), demo, Environment((1, 1)))
    assert trace.items == [demo.n]  # the zero-score dummy beats both positive items


@given(st.integers(2, 5), st.integers(0, 5000), st.integers(1, 4), st.data())
def test_distorted_greedy_step_is_argmax(n, seed, k, data):
    inst = augment_with_dummies(gen_coverage(n, seed), 1)
    states = tuple(data.draw(st.integers(0, 1)) for _ in range(n))
    trace = run_distorted_greedy(inst, k, Environment(states))
    psi = EMPTY
    for step in trace.steps:
        hs = [distorted_marginal(psi, e, step.i, k, inst) for e in range(inst.size) if e not in psi]
        assert step.h == max(hs)
        assert step.h >= 0
        if step.state is not None:
            psi = psi.extend(step.item, step.state)
    # each real item at most once
    reals = [s.item for s in trace.steps if s.state is not None]
    assert len(reals) == len(set(reals))


@pytest.mark.parametrize("seed", range(6))
def test_concatenation_keeps_discounted_optimum(seed):
    # g_avg(opt @ pi_i) >= (1 - 1/k)^i g_avg(opt) for the randomized policy
    inst = gen_coverage(3 + seed % 2, seed)
    k = 2 + seed % 2
    opt = TreePolicy(optimal_policy(inst, k))
    g_opt = evaluate_exact(opt, inst).g_avg
    for i in range(k + 1):
        g, _ = evaluate_concatenation_exact(concatenate(opt, RandomDistortedGreedy(k).truncated(i)), inst)
        assert g >= (1 - 1 / k) ** i * g_opt - 1e-9


def test_selection_distribution_sums_to_one():
    inst = gen_coverage(4, 3)
    for r in enumerate_realizations(inst.prior):
        law = selection_distribution(RandomDistortedGreedy(3), inst, r.states)
        assert math.fsum(law.values()) == pytest.approx(1.0)
