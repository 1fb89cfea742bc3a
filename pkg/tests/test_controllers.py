import numpy as np
import pytest

from adaptsim.controllers import (
    ControllerObservation,
    HeuristicController,
    HeuristicParams,
    LearningParams,
    QLearningController,
    QTable,
    QTableMismatchError,
    StaticController,
    cpu_bin,
    encode_state_v1,
    encode_state_v2,
    latency_bin,
    make_action_space,
    q_update,
    qtable_load,
    qtable_load_or_zeros,
    qtable_save,
    reward,
    select_action,
    state_count,
    static_fast_index,
)
from adaptsim.harness import run_episode
from adaptsim.profiling import ProfileEntry, ProfileTable
from adaptsim.service_model import ConstraintSpec, Requirement
from adaptsim.simenv import Environment, custom_trace

REQ = Requirement("precision", (ConstraintSpec("latency", 1.0),))


def obs(ratio=None, cpu=1.0, last=0, objective=None, ratios=None, satisfied=None):
    if ratio is not None and ratios is None:
        ratios = (ratio,)
    if ratios is not None and satisfied is None:
        satisfied = tuple(r <= 1.0 for r in ratios)
    return ControllerObservation(
        cpu_availability=cpu,
        last_config_ordinal=last,
        last_constraint_ratios=ratios,
        satisfied_last=satisfied,
        last_objective=objective,
    )


# --- state encoders ---------------------------------------------------------


def test_latency_bins_and_boundaries():
    assert latency_bin(None) == 0
    assert latency_bin(0.5) == 0
    assert latency_bin(0.8) == 1  # boundary belongs to the middle bin
    assert latency_bin(1.0) == 1
    assert latency_bin(1.2) == 2


def test_cpu_bins_and_boundaries():
    assert cpu_bin(0.3) == 0
    assert cpu_bin(0.5) == 1  # lower boundary inclusive upward
    assert cpu_bin(0.8) == 2
    assert cpu_bin(0.9) == 2


def test_encode_v1_examples():
    assert encode_state_v1(obs(ratio=0.5, last=3, objective=0.5), 16) == 3
    assert encode_state_v1(obs(ratio=1.2, last=0, objective=0.5), 16) == 32
    assert encode_state_v1(obs(ratio=0.8, last=0, objective=0.5), 16) == 16


def test_encode_v2_example():
    assert encode_state_v2(obs(ratio=0.9, cpu=0.9, last=2, objective=0.5), 16) == 82


def test_first_step_encodes_to_cheap_bins():
    first = ControllerObservation(cpu_availability=1.0)
    assert encode_state_v1(first, 16) == 0
    assert encode_state_v2(first, 16) == 2 * 16  # cpu bin 2 at idle start


def test_encoders_are_bijections():
    for encoder, fn, bins in (
        ("v1", encode_state_v1, [(r,) for r in (0.4, 0.9, 1.5)]),
        (
            "v2",
            encode_state_v2,
            [(r, c) for r in (0.4, 0.9, 1.5) for c in (0.3, 0.65, 0.9)],
        ),
    ):
        seen = set()
        for combo in bins:
            ratio = combo[0]
            cpu = combo[1] if len(combo) > 1 else 1.0
            for last in range(16):
                seen.add(fn(obs(ratio=ratio, cpu=cpu, last=last, objective=0.5), 16))
        assert seen == set(range(state_count(encoder, 16)))


# --- reward -----------------------------------------------------------------


def test_reward_satisfied_branch():
    assert reward(obs(ratio=0.7, objective=0.9), REQ) == 0.9


def test_reward_violated_branch():
    assert reward(obs(ratio=1.5, objective=0.9), REQ) == -1.5


def test_reward_sums_only_violated_constraints():
    req2 = Requirement(
        "precision",
        (ConstraintSpec("latency", 1.0), ConstraintSpec("startup_latency", 2.0)),
    )
    value = reward(obs(ratios=(2.0, 0.9), objective=0.9), req2)
    assert value == -2.0


def test_reward_requires_history():
    with pytest.raises(ValueError, match="last-step metrics"):
        reward(ControllerObservation(cpu_availability=1.0), REQ)


def test_reward_minimize_sense_negates_objective():
    req = Requirement(
        "energy", (ConstraintSpec("latency", 1.0),), objective_sense="minimize"
    )
    assert reward(obs(ratio=0.5, objective=0.4), req) == -0.4


def test_reward_branches_are_exclusive_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(500):
        objective = float(rng.uniform(0, 1))
        ratio = float(rng.uniform(0, 3))
        value = reward(obs(ratio=ratio, objective=objective), REQ)
        if ratio <= 1.0:
            assert 0.0 <= value <= 1.0
        else:
            assert value < 0


# --- Q table and update -------------------------------------------------------


def test_q_update_examples():
    params = LearningParams(alpha=0.1, gamma=0.9)
    table = QTable.zeros("v1", 2)
    q_update(table, 0, 0, 1.0, 1, params)
    assert table.values[0, 0] == pytest.approx(0.1)

    table = QTable.zeros("v1", 2)
    table.values[0, 0] = 1.0
    q_update(table, 0, 0, 0.0, 1, params)
    assert table.values[0, 0] == pytest.approx(0.9)

    table = QTable.zeros("v1", 2)
    q_update(table, 0, 1, -2.5, 1, LearningParams(alpha=1.0, gamma=0.0))
    assert table.values[0, 1] == -2.5


def test_q_update_touches_exactly_one_cell():
    table = QTable.zeros("v2", 16)
    before_v = table.values.copy()
    before_c = table.visit_counts.copy()
    q_update(table, 5, 7, 0.3, 9, LearningParams())
    diff_v = np.argwhere(table.values != before_v)
    diff_c = np.argwhere(table.visit_counts != before_c)
    assert diff_v.tolist() == [[5, 7]]
    assert diff_c.tolist() == [[5, 7]]
    assert table.visit_counts[5, 7] == 1


def test_q_update_index_errors():
    table = QTable.zeros("v1", 2)
    params = LearningParams()
    with pytest.raises(IndexError):
        q_update(table, 6, 0, 0.0, 0, params)
    with pytest.raises(IndexError):
        q_update(table, 0, 2, 0.0, 0, params)
    with pytest.raises(IndexError):
        q_update(table, 0, 0, 0.0, -1, params)


def test_select_action_greedy_and_tiebreak():
    table = QTable.zeros("v1", 3)
    rng = np.random.default_rng(0)
    table.values[0] = [0.1, 0.5, 0.2]
    assert select_action(table, 0, 0.0, rng) == 1
    table.values[1] = [0.4, 0.4, 0.4]
    assert select_action(table, 1, 0.0, rng) == 0


def test_select_action_uniform_under_full_exploration():
    table = QTable.zeros("v1", 16)
    rng = np.random.default_rng(123)
    draws = 10**5
    counts = np.zeros(16, dtype=int)
    for _ in range(draws):
        counts[select_action(table, 0, 1.0, rng)] += 1
    freqs = counts / draws
    assert np.all(np.abs(freqs - 1 / 16) <= 0.01)


def test_greedy_argmax_invariant_under_row_shift():
    rng = np.random.default_rng(5)
    table = QTable.zeros("v1", 8)
    table.values[2] = rng.normal(size=8)
    before = select_action(table, 2, 0.0, rng)
    table.values[2] += 17.25
    assert select_action(table, 2, 0.0, rng) == before


def test_qtable_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    table = QTable.zeros("v2", 16)
    table.values[:] = rng.normal(size=table.values.shape)
    table.visit_counts[:] = rng.integers(0, 100, size=table.values.shape)
    path = tmp_path / "q.txt"
    qtable_save(table, path)
    loaded = qtable_load(path)
    assert loaded.encoder == "v2"
    assert np.array_equal(loaded.values, table.values)
    assert np.array_equal(loaded.visit_counts, table.visit_counts)


def test_qtable_dimension_mismatch(tmp_path):
    path = tmp_path / "q.txt"
    qtable_save(QTable.zeros("v1", 16), path)
    with pytest.raises(QTableMismatchError, match="needs v2"):
        qtable_load_or_zeros(path, "v2", 16)


def test_qtable_absent_file_defaults_to_zeros(tmp_path):
    table = qtable_load_or_zeros(tmp_path / "missing.txt", "v2", 16)
    assert table.values.shape == (144, 16)
    assert not table.values.any()
    assert not table.visit_counts.any()


# --- static and heuristic controllers ----------------------------------------


def ladder_profile(n=6, sizes=(6, 48)):
    """n configs with objective k/n and latency 0.2 + 0.1 k (pure trade-off)."""
    entries = []
    for k in range(n):
        for s in sizes:
            entries.append(ProfileEntry((k,), s, 0.2 + 0.1 * k, (k + 1) / (n + 1)))
    return ProfileTable(entries)


def test_static_controller_returns_fixed_action():
    ctrl = StaticController(3, name="static")
    assert [ctrl.decide(obs(ratio=r, objective=0.5)) for r in (0.1, 2.0, 0.9)] == [3, 3, 3]


def test_static_fast_index_picks_min_latency():
    from adaptsim.service_model import enumerate_configurations, make_topology, sort_by_objective

    topo = make_topology("lad", [("op", [("k", [str(i) for i in range(6)])])])
    profile = ladder_profile()
    ranked = sort_by_objective(enumerate_configurations(topo), profile, 6)
    assert static_fast_index(ranked, profile, 6) == len(ranked) - 1


def test_static_fast_maximizes_satisfaction_among_static_policies(
    face_profile, face_requirement, face_sorted_configs
):
    # oracle: simulate every static rung on the same seeded episode
    actions = make_action_space(face_sorted_configs, 16)
    rates = []
    for idx in range(len(actions)):
        env = Environment(face_profile, face_requirement, custom_trace([48] * 300))
        episode = run_episode(env, StaticController(idx), actions, seed=99)
        rates.append(episode.metrics.latency_satisfaction_pct)
    fast = static_fast_index(actions, face_profile, 6)
    assert rates[fast] == max(rates)


def test_heuristic_degrades_every_violation():
    ctrl = HeuristicController(16)
    chosen = [ctrl.decide(ControllerObservation(cpu_availability=1.0))]
    for _ in range(2):
        chosen.append(ctrl.decide(obs(ratio=2.0, last=chosen[-1], objective=0.5)))
    assert chosen == [0, 1, 2]


def test_heuristic_upgrade_counter():
    ctrl = HeuristicController(16, HeuristicParams(upgrade_after=2, start_index=5))
    chosen = [ctrl.decide(ControllerObservation(cpu_availability=1.0))]
    for _ in range(5):
        chosen.append(ctrl.decide(obs(ratio=0.5, last=chosen[-1], objective=0.5)))
    assert chosen == [5, 5, 4, 4, 3, 3]


def test_heuristic_saturates_at_both_ends():
    ctrl = HeuristicController(3, HeuristicParams(upgrade_after=1, start_index=2))
    assert ctrl.decide(ControllerObservation(cpu_availability=1.0)) == 2
    assert ctrl.decide(obs(ratio=2.0, last=2, objective=0.5)) == 2  # worst rung holds
    ctrl2 = HeuristicController(3, HeuristicParams(upgrade_after=1))
    assert ctrl2.decide(ControllerObservation(cpu_availability=1.0)) == 0
    assert ctrl2.decide(obs(ratio=0.5, last=0, objective=0.5)) == 0  # best rung holds


def test_heuristic_steps_change_by_at_most_one():
    rng = np.random.default_rng(8)
    ctrl = HeuristicController(16, HeuristicParams(upgrade_after=3))
    prev = ctrl.decide(ControllerObservation(cpu_availability=1.0))
    for _ in range(500):
        ratio = float(rng.uniform(0.2, 1.8))
        current = ctrl.decide(obs(ratio=ratio, last=prev, objective=0.5))
        assert abs(current - prev) <= 1
        assert 0 <= current < 16
        prev = current


def test_heuristic_returns_to_last_working_rung_after_failed_upgrade():
    ctrl = HeuristicController(16, HeuristicParams(upgrade_after=1, start_index=8))
    assert ctrl.decide(ControllerObservation(cpu_availability=1.0)) == 8
    assert ctrl.decide(obs(ratio=0.5, last=8, objective=0.5)) == 7  # upgrade
    assert ctrl.decide(obs(ratio=1.4, last=7, objective=0.5)) == 8  # back down


# --- action space -------------------------------------------------------------


def test_make_action_space_even_spread(face_sorted_configs):
    actions = make_action_space(face_sorted_configs, 16)
    assert len(actions) == 16
    assert actions[0].ordinal == 0
    assert actions[-1].ordinal == 511
    ordinals = [c.ordinal for c in actions]
    assert ordinals == sorted(ordinals)


def test_make_action_space_all_and_oversized(face_sorted_configs):
    assert len(make_action_space(face_sorted_configs, "all")) == 512
    assert len(make_action_space(face_sorted_configs[:4], 16)) == 4
    assert [c.ordinal for c in make_action_space(face_sorted_configs, 1)] == [0]


# --- learning controller -------------------------------------------------------


def test_learning_controller_converges_in_toy_environment():
    # action 0 always violates at ratio 2.0; action 1 satisfies with objective 0.5
    wins = 0
    for seed in range(20):
        table = QTable.zeros("v1", 2)
        ctrl = QLearningController(
            "v1", table, REQ, LearningParams(), rng=np.random.default_rng(seed)
        )
        ctrl.reset()
        current = ControllerObservation(cpu_availability=1.0)
        seen = {encode_state_v1(current, 2)}
        for _ in range(500):
            action = ctrl.decide(current)
            ratio = 2.0 if action == 0 else 0.5
            current = obs(ratio=ratio, last=action, objective=0.5)
            seen.add(encode_state_v1(current, 2))
        if all(int(np.argmax(table.values[s])) == 1 for s in seen):
            wins += 1
    assert wins >= 19


def test_learning_controller_resumes_epsilon_from_visits():
    params = LearningParams(epsilon_start=1.0, epsilon_decay=0.995, epsilon_min=0.05)
    fresh = QLearningController("v1", QTable.zeros("v1", 2), REQ, params)
    assert fresh.epsilon == 1.0
    warm_table = QTable.zeros("v1", 2)
    warm_table.visit_counts[0, 0] = 10_000
    warm = QLearningController("v1", warm_table, REQ, params)
    assert warm.epsilon == 0.05


def test_learning_controller_encoder_table_mismatch():
    with pytest.raises(QTableMismatchError):
        QLearningController("v2", QTable.zeros("v1", 2), REQ)


def test_finish_folds_last_reward():
    table = QTable.zeros("v1", 2)
    ctrl = QLearningController(
        "v1", table, REQ, LearningParams(epsilon_start=0.0, epsilon_min=0.0),
        rng=np.random.default_rng(0),
    )
    ctrl.reset()
    first = ControllerObservation(cpu_availability=1.0)
    action = ctrl.decide(first)
    updates_before = table.total_visits
    ctrl.finish(obs(ratio=0.5, last=action, objective=0.7))
    assert table.total_visits == updates_before + 1
