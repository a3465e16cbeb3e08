import random

import pytest
from scipy import stats

from bamsim import (
    ExhaustionEvent,
    Hyperparams,
    ManagerAction,
    ManagerState,
    QTable,
    Request,
    ResourceClass,
    legal_actions,
    observe,
    select_action,
    state_space_size,
    update,
)
from bamsim.engine import ClassUsage
from bamsim.manager import NOOP_ACTION, TRANSFER


def classes(*constraints, privates=None):
    privates = privates or [0] * len(constraints)
    return [
        ResourceClass(index=i, priority=i, constraint=c, private=p)
        for i, (c, p) in enumerate(zip(constraints, privates))
    ]


def event(cfgs, used, denied_class=0, recent=None):
    snapshot = tuple(
        ClassUsage(
            index=c.index,
            constraint=c.constraint,
            attributed_used=used[c.index],
            free_private=c.private,
            free_public=c.public - used[c.index],
        )
        for c in cfgs
    )
    return ExhaustionEvent(
        link=("a", "b"),
        request=Request("probe", denied_class, 1),
        snapshot=snapshot,
        recent_denials=tuple(recent) if recent else (),
    )


def transfer(src, dst, delta=10):
    return ManagerAction(kind=TRANSFER, from_class=src, to_class=dst, delta=delta)


# -- observe -------------------------------------------------------------


def test_observe_fresh_snapshot_gives_zero_buckets():
    cfgs = classes(30, 50, 20)
    state = observe(event(cfgs, {0: 0, 1: 0, 2: 0}), cfgs, buckets=5)
    assert state.buckets == (0, 0, 0)
    assert state.denied_flags == (0, 0, 0)
    assert state.denied_class == 0


def test_observe_saturated_snapshot_gives_top_buckets():
    cfgs = classes(30, 50, 20)
    state = observe(event(cfgs, {0: 30, 1: 50, 2: 20}, denied_class=2), cfgs, buckets=5)
    assert state.buckets == (4, 4, 4)
    assert state.denied_class == 2


def test_observe_bucket_boundary_uses_floor():
    cfgs = classes(50)
    state = observe(event(cfgs, {0: 25}), cfgs, buckets=5)
    assert state.buckets == (2,)  # floor(25 * 5 / 50)


def test_observe_is_deterministic_and_carries_denial_flags():
    cfgs = classes(30, 50, 20)
    ev = event(cfgs, {0: 10, 1: 20, 2: 5}, denied_class=1, recent=[0, 1, 0])
    assert observe(ev, cfgs) == observe(ev, cfgs)
    assert observe(ev, cfgs).denied_flags == (0, 1, 0)


def test_observe_zero_constraint_counts_as_saturated():
    cfgs = classes(0, 10)
    state = observe(event(cfgs, {0: 0, 1: 0}), cfgs, buckets=5)
    assert state.buckets == (4, 0)


# -- legal actions ---------------------------------------------------------


def test_legal_actions_only_noop_when_all_full():
    cfgs = classes(30, 50, 20)
    acts = legal_actions(cfgs, {0: 30, 1: 50, 2: 20}, nrc=100, delta=10)
    assert acts == [NOOP_ACTION]


def test_legal_actions_from_slack_donor_only():
    cfgs = classes(30, 50, 20)
    acts = legal_actions(cfgs, {0: 30, 1: 30, 2: 20}, nrc=100, delta=10)
    assert acts == [NOOP_ACTION, transfer(1, 0), transfer(1, 2)]


def test_legal_actions_single_class_is_noop_only():
    cfgs = classes(40)
    assert legal_actions(cfgs, {0: 0}, nrc=40, delta=10) == [NOOP_ACTION]


def test_legal_actions_respect_private_reservation():
    cfgs = classes(30, 30, privates=[25, 0])
    acts = legal_actions(cfgs, {0: 0, 1: 0}, nrc=60, delta=10)
    # class 0 cannot shrink below its 25 private units
    assert transfer(0, 1) not in acts
    assert transfer(1, 0) in acts


def test_legal_transfers_preserve_total_and_usage_bounds():
    rng = random.Random(3)
    for _ in range(100):
        cfgs = classes(*(rng.randint(0, 40) for _ in range(rng.randint(1, 4))))
        used = {c.index: rng.randint(0, c.constraint) for c in cfgs}
        total = sum(c.constraint for c in cfgs)
        for action in legal_actions(cfgs, used, nrc=total, delta=10):
            if action.kind == TRANSFER:
                donor = cfgs[action.from_class]
                assert donor.constraint - action.delta >= used[donor.index]
                assert donor.constraint - action.delta >= donor.private


# -- action selection --------------------------------------------------------


def test_select_action_pure_exploitation_picks_max():
    q = QTable(epsilon=0.0)
    state = ManagerState((0,), (0,), 0)
    legal = [NOOP_ACTION, transfer(0, 1), transfer(1, 0)]
    q.values[(state, transfer(1, 0))] = 1.0
    assert select_action(q, state, legal) == transfer(1, 0)


def test_select_action_all_equal_takes_canonical_first():
    q = QTable(epsilon=0.0)
    state = ManagerState((0,), (0,), 0)
    legal = [transfer(1, 0), transfer(0, 1), NOOP_ACTION]
    assert select_action(q, state, legal) == NOOP_ACTION


def test_select_action_tie_between_transfers_prefers_lowest_ordinal():
    q = QTable(epsilon=0.0)
    state = ManagerState((0,), (0,), 0)
    legal = [NOOP_ACTION, transfer(0, 1), transfer(0, 2), transfer(1, 0)]
    for a in legal[1:]:
        q.values[(state, a)] = 2.5
    assert select_action(q, state, legal) == transfer(0, 1)


def test_select_action_epsilon_one_is_uniform_chi_squared():
    q = QTable(epsilon=1.0, seed=123)
    state = ManagerState((0, 0), (0, 0), 0)
    legal = [NOOP_ACTION, transfer(0, 1), transfer(1, 0)]
    draws = 10_000
    counts = {a: 0 for a in legal}
    for _ in range(draws):
        counts[select_action(q, state, legal)] += 1
    expected = draws / len(legal)
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    threshold = stats.chi2.ppf(0.999, df=len(legal) - 1)
    assert chi2 < threshold, f"chi2 {chi2:.2f} exceeds {threshold:.2f}: {counts}"


def test_select_action_requires_nonempty_legal_set():
    with pytest.raises(ValueError):
        select_action(QTable(), ManagerState((0,), (0,), 0), [])


# -- updates ------------------------------------------------------------------


def test_update_alpha_one_gamma_zero_collapses_to_reward():
    q = QTable(alpha=1.0, gamma=0.0)
    s = ManagerState((0,), (0,), 0)
    update(q, s, NOOP_ACTION, reward=5.0, next_state=s, legal_next=[NOOP_ACTION])
    assert q.get(s, NOOP_ACTION) == 5.0


def test_update_alpha_zero_is_rejected_by_construction():
    with pytest.raises(ValueError):
        QTable(alpha=0.0)


def test_update_bellman_arithmetic_hand_case():
    q = QTable(alpha=0.5, gamma=0.9)
    s = ManagerState((0,), (0,), 0)
    s2 = ManagerState((1,), (0,), 0)
    a2 = transfer(0, 1)
    q.values[(s, NOOP_ACTION)] = 2.0
    q.values[(s2, a2)] = 4.0
    update(q, s, NOOP_ACTION, reward=1.0, next_state=s2, legal_next=[NOOP_ACTION, a2])
    assert f"{q.get(s, NOOP_ACTION):.9f}" == "3.300000000"


def test_update_changes_exactly_one_entry():
    q = QTable(alpha=0.5, gamma=0.5)
    s = ManagerState((0,), (0,), 0)
    s2 = ManagerState((1,), (0,), 0)
    q.values[(s2, NOOP_ACTION)] = 7.0
    before = dict(q.values)
    update(q, s, NOOP_ACTION, reward=1.0, next_state=s2, legal_next=[NOOP_ACTION])
    changed = {k for k in q.values if q.values.get(k) != before.get(k, 0.0)}
    assert changed == {(s, NOOP_ACTION)}


def test_update_terminal_bootstraps_zero():
    q = QTable(alpha=1.0, gamma=0.9)
    s = ManagerState((0,), (0,), 0)
    update(q, s, NOOP_ACTION, reward=-3.0, next_state=None)
    assert q.get(s, NOOP_ACTION) == -3.0


def test_values_stay_bounded_with_clipped_rewards():
    rng = random.Random(17)
    r_max = 1.0
    q = QTable(alpha=0.7, gamma=0.9)
    bound = r_max / (1 - q.gamma)
    states = [ManagerState((i,), (0,), 0) for i in range(4)]
    actions = [NOOP_ACTION, transfer(0, 1)]
    for _ in range(5000):
        s, s2 = rng.choice(states), rng.choice(states)
        a = rng.choice(actions)
        reward = max(-r_max, min(r_max, rng.uniform(-3, 3)))
        update(q, s, a, reward, s2, actions)
        assert all(abs(v) <= bound + 1e-9 for v in q.values.values())


# -- table persistence ---------------------------------------------------------


def test_qtable_missing_entries_read_zero():
    q = QTable()
    assert q.get(ManagerState((0,), (0,), 0), NOOP_ACTION) == 0.0


def test_qtable_round_trips_through_text():
    q = QTable(alpha=0.5, gamma=0.8)
    s1 = ManagerState((0, 1), (1, 0), 0)
    s2 = ManagerState((4, 2), (0, 1), 1)
    q.values[(s1, NOOP_ACTION)] = 1.25
    q.values[(s2, transfer(1, 0, 5))] = -0.5
    q.values[(s1, transfer(0, 1, 5))] = 0.0  # dropped: zero entries are not stored
    text = q.to_text()
    back = QTable.from_text(text, alpha=0.5, gamma=0.8)
    assert back.values == {
        (s1, NOOP_ACTION): 1.25,
        (s2, transfer(1, 0, 5)): -0.5,
    }
    assert back.to_text() == text


def test_qtable_serialization_is_canonically_sorted():
    q = QTable()
    s_late = ManagerState((3,), (0,), 0)
    s_early = ManagerState((1,), (0,), 0)
    q.values[(s_late, NOOP_ACTION)] = 1.0
    q.values[(s_early, transfer(0, 1))] = 2.0
    q.values[(s_early, NOOP_ACTION)] = 3.0
    lines = q.to_text().splitlines()
    assert lines == [
        "1|0|0 noop 3.000000000",
        "1|0|0 t:0>1:10 2.000000000",
        "3|0|0 noop 1.000000000",
    ]


def test_qtable_values_quantized_at_nine_decimals():
    q = QTable()
    s = ManagerState((0,), (0,), 0)
    q.values[(s, NOOP_ACTION)] = 0.123456789123
    back = QTable.from_text(q.to_text())
    assert back.get(s, NOOP_ACTION) == 0.123456789
    assert QTable.from_text(back.to_text()).values == back.values


def test_state_space_size_formula():
    assert state_space_size(3, 5) == 5**3 * 2**3 * 3
    assert state_space_size(1, 2) == 2 * 2 * 1
