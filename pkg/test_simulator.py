"""
Tests du simulateur : politique humaine, garde-fou, rollouts complets et décisions en ligne
"""

import numpy as np
import pytest

from conftest import FIXTURES
from filter.data_loading import load_graphs, load_predictions, load_trajectories
from filter.synthetic import conforming_trajectory, perturb_trajectory, random_region_graph
from functions.errors import IngestionError, InvariantViolation
from functions.graph_core import initial_state, state_from_executed
from functions.planner import DecisionReason, ExecutionHistory
from functions.simulator import (
    RolloutEvent, RolloutJob, RolloutLog, StepPrediction, Trajectory, human_policy_step, online_decisions,
    replay_log, rollout, run_jobs, safeguarded_legal
)
from functions.threads import build_thread_map


@pytest.fixture
def corpus():
    graphs = load_graphs([FIXTURES / "graphs"])
    trajectories = {t.video_id: t for t in load_trajectories(FIXTURES / "trajectories.jsonl", graphs)}
    predictions = load_predictions(FIXTURES / "predictions.jsonl")
    return graphs, trajectories, predictions


def _g2_trajectory(*steps):
    return Trajectory("g2-test", "breakfast", steps or ("a1", "a2", "b1", "f"))


def _robot_steps(log):
    return [e.node for e in log.events if e.agent == "robot" and e.is_execute]


# ============================================================================
# POLITIQUE HUMAINE ET GARDE-FOU
# ============================================================================

def test_safeguarded_legal(g2):
    state = initial_state(g2)
    assert safeguarded_legal(g2, state, "a2", ("a1", "b1")) == (("a1", "a2", "b1"), True)
    assert safeguarded_legal(g2, state, "a1", ("a1", "b1")) == (("a1", "b1"), False)
    assert safeguarded_legal(g2, state, None, ("a1", "b1")) == (("a1", "b1"), False)
    assert safeguarded_legal(g2, state, "M'", ("a1", "b1")) == (("a1", "b1"), False)


def test_human_follows_annotation(g2, g2_map):
    move = human_policy_step(g2, initial_state(g2), _g2_trajectory(), 0, ExecutionHistory(), g2_map)
    assert (move.node, move.cursor, move.reason, move.safeguard) == ("a1", 1, "annotated", False)


def test_human_skips_steps_done_by_robot(g2, g2_map):
    state = state_from_executed(g2, ["a1", "a2"])
    history = ExecutionHistory(human=["a1"], robot=["a2"])
    move = human_policy_step(g2, state, _g2_trajectory(), 1, history, g2_map)
    assert move.node == "b1" and move.cursor == 3


def test_human_safeguard_and_blocking(g2, g2_map):
    trajectory = _g2_trajectory("a2", "b1", "f")
    state = initial_state(g2)
    relaxed = human_policy_step(g2, state, trajectory, 0, ExecutionHistory(), g2_map, safeguard=True)
    assert (relaxed.node, relaxed.reason, relaxed.safeguard) == ("a2", "safeguard", True)

    strict = human_policy_step(g2, state, trajectory, 0, ExecutionHistory(), g2_map, safeguard=False)
    assert (strict.node, strict.cursor, strict.reason) == ("b1", 0, "annotated")

    after_b1 = state_from_executed(g2, ["b1"])
    blocked = human_policy_step(g2, after_b1, trajectory, 0, ExecutionHistory(human=["b1"]), g2_map,
                                safeguard=False)
    assert blocked.node is None and blocked.reason == "blocked"


def test_human_fallback_after_annotation(optional):
    thread_map = build_thread_map(optional)
    trajectory = Trajectory("opt", "sandwich", ("s1", "x"))
    state = state_from_executed(optional, ["s1", "x"])
    move = human_policy_step(optional, state, trajectory, 2, ExecutionHistory(human=["s1", "x"]), thread_map)
    assert (move.node, move.reason) == ("j", "fallback")


def test_human_on_complete_state(g2, g2_map):
    done = state_from_executed(g2, ["a1", "a2", "b1", "f"])
    assert human_policy_step(g2, done, _g2_trajectory(), 4, ExecutionHistory(), g2_map).reason == "complete"


# ============================================================================
# ROLLOUTS COMPLETS
# ============================================================================

def test_g2_entropy_rollout(g2, g2_map):
    log = rollout(g2, g2_map, _g2_trajectory(), "entropy")
    assert log.complete and not log.stalled
    assert (log.b, log.h, log.saved_steps) == (4, 2, 2)
    assert _robot_steps(log) == ["b1", "f"]
    assert [(e.agent, e.node) for e in log.events] == [
        ("human", "a1"), ("robot", "b1"), ("human", "a2"), ("robot", "f"),
    ]
    assert log.events[1].h_mix == 0.0


def test_g2_greedy_rollout(g2, g2_map):
    log = rollout(g2, g2_map, _g2_trajectory(), "greedy")
    assert (log.h, log.saved_steps) == (2, 2)
    assert _robot_steps(log) == ["a2", "f"]
    human = [e.node for e in log.events if e.agent == "human" and e.is_execute]
    assert human == ["a1", "b1"]


def test_g2_human_only_rollout(g2, g2_map):
    log = rollout(g2, g2_map, _g2_trajectory(), "none")
    assert log.complete and log.saved_steps == 0
    assert all(e.agent == "human" for e in log.events)
    assert log.final_executed == tuple(sorted(g2.node_ids))


def test_unknown_policy(g2, g2_map):
    with pytest.raises(ValueError):
        rollout(g2, g2_map, _g2_trajectory(), "random")


def test_unresolved_trajectory_step(g2, g2_map):
    with pytest.raises(IngestionError):
        rollout(g2, g2_map, _g2_trajectory("a1", "ghost"), "entropy")


def test_empty_trajectory():
    with pytest.raises(IngestionError):
        Trajectory("vide", "breakfast", ())


def test_file_predictions_drive_the_robot(corpus):
    graphs, trajectories, predictions = corpus
    graph = graphs["breakfast"]
    log = rollout(graph, build_thread_map(graph), trajectories["g2-v1"], "entropy", predictions["g2-v1"])
    assert log.complete
    robot = [e for e in log.events if e.agent == "robot"]
    assert robot[0].node == "b1"
    assert log.h >= 2
    assert replay_log(graph, log).executed == frozenset(log.final_executed)


def test_paired_saved_steps_on_fixtures(corpus):
    graphs, trajectories, _ = corpus
    for video_id in ("g2-v1", "chain-v1", "overlap-v1", "nested-v1"):
        trajectory = trajectories[video_id]
        graph = graphs[trajectory.task]
        thread_map = build_thread_map(graph)
        entropy = rollout(graph, thread_map, trajectory, "entropy")
        greedy = rollout(graph, thread_map, trajectory, "greedy")
        alone = rollout(graph, thread_map, trajectory, "none")
        assert entropy.saved_steps == greedy.saved_steps, video_id
        assert alone.saved_steps == 0
        assert entropy.complete and greedy.complete


def test_paired_saved_steps_on_random_and_only_graphs():
    """
    Graphes sans fusion OR uniquement : la première étape annotée restante y
    est toujours légale, d'où H = ceil(B/2) pour les deux politiques. Avec des
    fusions OR les pas économisés peuvent différer.
    """
    rng = np.random.default_rng(17)
    for i in range(200):
        graph = random_region_graph(rng, overlap_prob=0.3, nested_prob=0.3, or_prob=0.0)
        thread_map = build_thread_map(graph)
        trajectory = Trajectory(f"v{i}", graph.task, conforming_trajectory(rng, graph))
        entropy = rollout(graph, thread_map, trajectory, "entropy")
        greedy = rollout(graph, thread_map, trajectory, "greedy")
        assert entropy.complete and greedy.complete
        assert entropy.saved_steps == greedy.saved_steps
        assert entropy.h == (len(trajectory.steps) + 1) // 2
        for log in (entropy, greedy):
            replay_log(graph, log)


def test_perturbed_trajectories_need_the_safeguard():
    rng = np.random.default_rng(23)
    perturbed = 0
    for i in range(500):
        graph = random_region_graph(rng, overlap_prob=0.2, nested_prob=0.2)
        thread_map = build_thread_map(graph)
        steps, dropped = perturb_trajectory(rng, graph, conforming_trajectory(rng, graph))
        if dropped is None:
            continue
        perturbed += 1
        trajectory = Trajectory(f"p{i}", graph.task, steps)
        for policy in ("none", "entropy"):
            strict = rollout(graph, thread_map, trajectory, policy, safeguard=False)
            assert strict.stalled and not strict.complete
            assert strict.safeguard_uses == 0

            relaxed = rollout(graph, thread_map, trajectory, policy, safeguard=True)
            assert relaxed.safeguard_uses >= 1
            assert relaxed.complete or relaxed.stalled
            replay_log(graph, relaxed)
    assert perturbed > 400


def test_rollout_is_deterministic(corpus):
    graphs, trajectories, _ = corpus
    trajectory = trajectories["nested-v1"]
    graph = graphs["shelf"]
    thread_map = build_thread_map(graph)
    assert rollout(graph, thread_map, trajectory) == rollout(graph, thread_map, trajectory)


def test_replay_detects_tampered_log(g2):
    tampered = RolloutLog(
        video_id="g2-x", task="breakfast", policy="entropy",
        events=(RolloutEvent(0, "human", "execute", "f", "annotated", 0),),
        final_executed=("M", "Start", "f"), complete=False, b=1, h=1,
    )
    with pytest.raises(InvariantViolation):
        replay_log(g2, tampered)


def test_replay_detects_wrong_final_state(g2, g2_map):
    log = rollout(g2, g2_map, _g2_trajectory(), "entropy")
    wrong = RolloutLog(log.video_id, log.task, log.policy, log.events, ("Start",), True, log.b, log.h)
    with pytest.raises(InvariantViolation, match="final"):
        replay_log(g2, wrong)


def test_run_jobs_keeps_input_order(corpus):
    graphs, trajectories, _ = corpus
    jobs = []
    for trajectory in trajectories.values():
        graph = graphs[trajectory.task]
        jobs.append(RolloutJob(graph, build_thread_map(graph), trajectory, "entropy"))
    sequential = run_jobs(jobs, workers=1)
    parallel = run_jobs(jobs, workers=2)
    assert [log.video_id for log in sequential] == list(trajectories)
    assert sequential == parallel


# ============================================================================
# DÉCISIONS EN LIGNE
# ============================================================================

def test_g2_online_decisions(corpus):
    graphs, trajectories, predictions = corpus
    graph = graphs["breakfast"]
    samples = online_decisions(graph, build_thread_map(graph), trajectories["g2-v1"], predictions["g2-v1"])
    assert samples.skipped == 0
    assert [str(s.decision) for s in samples] == [
        "Execute(a1)", "Execute(b1)", "Wait(forced_wait)", "Wait(empty_candidates)",
    ]
    assert [s.correct for s in samples] == [True, True, False, False]
    assert [s.parallel for s in samples] == [False, True, False, False]
    assert samples[2].unresolved == ("Tighten flux capacitor",)
    assert not samples[2].current_in_vocabulary
    assert samples[3].true_trigger is False and samples[3].predicted_trigger is True
    assert samples[0].truth_future_labels == ("cut bread", "toast bread", "boil water", "serve breakfast")


def test_optional_branch_is_not_correct(corpus):
    graphs, trajectories, predictions = corpus
    graph = graphs["sandwich"]
    samples = online_decisions(graph, build_thread_map(graph), trajectories["optional-v1"],
                               predictions["optional-v1"], policy="greedy")
    assert [s.decision.node for s in samples] == ["s1", "x", "j"]
    assert [s.correct for s in samples] == [True, False, True]


def test_missing_predictions_are_skipped(corpus):
    graphs, trajectories, _ = corpus
    graph = graphs["shelf"]
    samples = online_decisions(graph, build_thread_map(graph), trajectories["nested-v1"], {})
    assert len(samples) == 0 and samples.skipped == 6
    assert samples.header_record()["skipped"] == 6


def test_online_requires_a_robot_policy(g2, g2_map):
    with pytest.raises(ValueError):
        online_decisions(g2, g2_map, _g2_trajectory(), {}, policy="none")


def test_online_trigger_off_means_empty_prediction(g2, g2_map):
    predictions = {0: StepPrediction(0, trigger=False, future_steps=("cut bread",))}
    samples = online_decisions(g2, g2_map, _g2_trajectory(), predictions)
    assert samples[0].decision.reason == DecisionReason.EMPTY_CANDIDATES
    assert samples.skipped == 3
