"""
Module de simulation de la collaboration humain-robot
- rollout : déroulé complet depuis l'état initial d'une vidéo (tour humain puis robot)
- online_decisions : décisions à un pas reconstruites sur le préfixe annoté
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from functions.errors import IllegalActionError, IngestionError, InvariantViolation
from functions.graph_core import (
    ProgressionState, TaskGraph, apply_step, initial_state, is_complete,
    legal_actions, resolve_labels, state_from_executed
)
from functions.planner import (
    ExecutionHistory, PredictedSequence, RobotAction,
    select_action_entropy, select_action_greedy
)
from functions.threads import ThreadMap, thread_of

logger = logging.getLogger(__name__)

DEFAULT_STALL_ROUNDS = 2
MAX_FUTURE_STEPS = 5


class Policy(str, Enum):
    ENTROPY = "entropy"
    GREEDY = "greedy"
    NONE = "none"


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class Trajectory:
    video_id: str
    task: str
    steps: Tuple[str, ...]
    triggers: Optional[Tuple[bool, ...]] = None
    timings: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise IngestionError(f"Trajectoire vide pour la vidéo {self.video_id}",
                                 [(self.video_id, "steps")])

    def needs_trigger(self, t: int) -> bool:
        if self.triggers is None or t >= len(self.triggers):
            return True
        return bool(self.triggers[t])


@dataclass(frozen=True)
class StepPrediction:
    """Sortie du modèle à un pas de temps (déclencheur, étape courante, étapes futures)"""
    timestep: int
    trigger: bool = True
    current_step: Optional[str] = None
    future_steps: Tuple[str, ...] = ()

    def predicted(self, graph: TaskGraph) -> PredictedSequence:
        if not self.trigger:
            return PredictedSequence()
        return PredictedSequence.from_labels(graph, self.future_steps)


@dataclass(frozen=True)
class RolloutEvent:
    timestep: int
    agent: str
    action: str
    node: Optional[str]
    reason: str
    thread: Optional[int]
    safeguard: bool = False
    h_mix: Optional[float] = None
    candidates: Tuple[str, ...] = ()

    @property
    def is_execute(self) -> bool:
        return self.action == "execute"

    def to_record(self) -> dict:
        return {
            "type": "event", "timestep": self.timestep, "agent": self.agent,
            "action": self.action, "node": self.node, "reason": self.reason,
            "thread": self.thread, "safeguard": self.safeguard,
            "h_mix": self.h_mix, "candidates": list(self.candidates),
        }


@dataclass(frozen=True)
class RolloutLog:
    video_id: str
    task: str
    policy: str
    events: Tuple[RolloutEvent, ...]
    final_executed: Tuple[str, ...]
    complete: bool
    b: int
    h: int
    stalled: bool = False
    safeguard_uses: int = 0

    @property
    def saved_steps(self) -> int:
        return self.b - self.h

    def header_record(self) -> dict:
        return {
            "type": "rollout", "video_id": self.video_id, "task": self.task,
            "policy": self.policy, "final_executed": list(self.final_executed),
            "complete": self.complete, "b": self.b, "h": self.h,
            "stalled": self.stalled, "safeguard_uses": self.safeguard_uses,
        }

    def to_records(self) -> List[dict]:
        return [self.header_record()] + [e.to_record() for e in self.events]


@dataclass(frozen=True)
class DecisionSample:
    video_id: str
    task: str
    timestep: int
    executed: Tuple[str, ...]
    human: Tuple[str, ...]
    robot: Tuple[str, ...]
    predicted: Tuple[str, ...]
    unresolved: Tuple[str, ...]
    ground_truth_next: str
    decision: RobotAction
    correct: bool
    parallel: bool
    h_prev_thread: Optional[int]
    action_thread: Optional[int]
    predicted_trigger: bool = True
    true_trigger: bool = True
    current_step: Optional[str] = None
    current_in_vocabulary: bool = True
    future_labels: Tuple[str, ...] = ()
    truth_future_labels: Tuple[str, ...] = ()

    @property
    def h_mix(self) -> Optional[float]:
        bd = self.decision.breakdown
        return bd.h_mix if bd is not None else None

    def to_record(self) -> dict:
        return {
            "type": "sample", "video_id": self.video_id, "task": self.task,
            "timestep": self.timestep, "executed": list(self.executed),
            "human": list(self.human), "robot": list(self.robot),
            "predicted": list(self.predicted), "unresolved": list(self.unresolved),
            "ground_truth_next": self.ground_truth_next,
            "action": self.decision.kind.value, "node": self.decision.node,
            "reason": self.decision.reason.value, "h_mix": self.h_mix,
            "candidates": list(self.decision.candidates),
            "correct": self.correct, "parallel": self.parallel,
            "h_prev_thread": self.h_prev_thread, "action_thread": self.action_thread,
            "predicted_trigger": self.predicted_trigger, "true_trigger": self.true_trigger,
            "current_step": self.current_step,
            "current_in_vocabulary": self.current_in_vocabulary,
            "future_labels": list(self.future_labels),
            "truth_future_labels": list(self.truth_future_labels),
        }


class OnlineDecisions(list):
    """Liste de DecisionSample d'une vidéo ; `skipped` compte les pas sans prédiction"""

    def __init__(self, samples=(), skipped=0, video_id="", task="", policy="entropy"):
        super().__init__(samples)
        self.skipped = skipped
        self.video_id = video_id
        self.task = task
        self.policy = policy

    def header_record(self) -> dict:
        return {"type": "online", "video_id": self.video_id, "task": self.task,
                "policy": self.policy, "skipped": self.skipped}

    def to_records(self) -> List[dict]:
        return [self.header_record()] + [s.to_record() for s in self]


@dataclass
class HumanMove:
    node: Optional[str]
    cursor: int
    reason: str
    safeguard: bool = False


# ============================================================================
# POLITIQUE HUMAINE
# ============================================================================

def safeguarded_legal(graph: TaskGraph, state: ProgressionState, g_next: Optional[str],
                      legal: Sequence[str]) -> Tuple[Tuple[str, ...], bool]:
    """
    Relâchement d'un pas : admet la prochaine étape annotée si elle est bloquée

    Returns:
        tuple: (ensemble légal éventuellement augmenté, trié ; drapeau garde-fou)
    """
    legal = tuple(legal)
    if g_next is None or g_next in legal or g_next in state.executed:
        return legal, False
    if g_next not in graph.nodes or not graph.nodes[g_next].is_executable:
        return legal, False
    return tuple(sorted(legal + (g_next,))), True


def _next_annotated(trajectory: Trajectory, state: ProgressionState, cursor: int) -> int:
    while cursor < len(trajectory.steps) and trajectory.steps[cursor] in state.executed:
        cursor += 1
    return cursor


def _remaining_annotated(trajectory: Trajectory, state: ProgressionState) -> Tuple[str, ...]:
    return tuple(s for s in trajectory.steps if s not in state.executed)


def human_policy_step(graph: TaskGraph, state: ProgressionState, trajectory: Trajectory, cursor: int,
                      history: ExecutionHistory, thread_map: ThreadMap, safeguard: bool = True) -> HumanMove:
    """
    Prochain coup humain

    Suit l'annotation (première étape annotée non exécutée et admise) ; si toutes
    les étapes annotées ont été exécutées, bascule vers le fil le moins occupé
    par le robot. Wait si rien n'est possible.

    Returns:
        HumanMove: étape choisie (ou None), curseur, motif et drapeau garde-fou
    """
    if is_complete(graph, state):
        return HumanMove(None, cursor, "complete")

    legal = legal_actions(graph, state)
    cursor = _next_annotated(trajectory, state, cursor)

    if cursor < len(trajectory.steps):
        allowed, flagged = legal, False
        if safeguard:
            allowed, flagged = safeguarded_legal(graph, state, trajectory.steps[cursor], legal)
        for position in range(cursor, len(trajectory.steps)):
            step = trajectory.steps[position]
            if step in state.executed or step not in allowed:
                continue
            used = flagged and step == trajectory.steps[cursor]
            next_cursor = cursor + 1 if position == cursor else cursor
            return HumanMove(step, next_cursor, "safeguard" if used else "annotated", used)
        return HumanMove(None, cursor, "blocked")

    if not legal:
        return HumanMove(None, cursor, "idle")

    # bascule vers une branche parallèle : fil le moins exécuté par le robot
    robot_load = {}
    for x in history.robot:
        k = thread_of(thread_map, x)
        robot_load[k] = robot_load.get(k, 0) + 1
    step = min(legal, key=lambda a: (robot_load.get(thread_of(thread_map, a), 0), thread_of(thread_map, a), a))
    return HumanMove(step, cursor, "fallback")


# ============================================================================
# DÉROULÉ COMPLET
# ============================================================================

def _robot_decision(policy, graph, state, history, predicted, thread_map, legal, g_next):
    if policy == Policy.ENTROPY:
        return select_action_entropy(graph, state, history, predicted, thread_map, legal=legal, demote=g_next)
    return select_action_greedy(graph, state, history, predicted, thread_map, legal=legal)


def rollout(graph: TaskGraph, thread_map: ThreadMap, trajectory: Trajectory, policy="entropy",
            predictions: Optional[Mapping[int, StepPrediction]] = None, safeguard: bool = True,
            stall_rounds: int = DEFAULT_STALL_ROUNDS) -> RolloutLog:
    """
    Simule la collaboration depuis l'état initial jusqu'à complétion ou blocage

    Args:
        graph: Graphe validé
        thread_map: Application π du graphe
        trajectory: Trace humaine annotée (NodeIds)
        policy: "entropy", "greedy" ou "none" (humain seul)
        predictions: Prédictions par pas de temps ; None = oracle (reste de l'annotation)
        safeguard: Active le relâchement d'un pas pour la prochaine étape annotée
        stall_rounds: Nombre de tours consécutifs sans action avant arrêt

    Returns:
        RolloutLog: trace d'événements et bilan (B_i, H_i, complétion, blocage)
    """
    policy = Policy(policy)
    for step in trajectory.steps:
        if step not in graph.nodes or not graph.nodes[step].is_executable:
            raise IngestionError(f"Étape {step!r} non résolue pour la vidéo {trajectory.video_id}",
                                 [(trajectory.video_id, step)])

    state = initial_state(graph)
    history = ExecutionHistory()
    cursor = 0
    events: List[RolloutEvent] = []
    idle_rounds = 0
    stalled = False
    uses = 0
    t = 0

    while not is_complete(graph, state):
        # ---- tour humain ----
        move = human_policy_step(graph, state, trajectory, cursor, history, thread_map, safeguard)
        cursor = move.cursor
        human_acted = move.node is not None
        if human_acted:
            state = apply_step(graph, state, move.node, relaxed=move.safeguard)
            history = history.with_human(move.node)
            uses += int(move.safeguard)
            events.append(RolloutEvent(t, "human", "execute", move.node, move.reason,
                                       thread_of(thread_map, move.node), move.safeguard))
        else:
            events.append(RolloutEvent(t, "human", "wait", None, move.reason, None))

        if is_complete(graph, state):
            break

        # ---- tour robot ----
        robot_acted = False
        if policy != Policy.NONE:
            remaining = _remaining_annotated(trajectory, state)
            g_next = remaining[0] if remaining else None
            if predictions is None:
                predicted = PredictedSequence(remaining)
            elif t in predictions:
                predicted = predictions[t].predicted(graph)
            else:
                predicted = PredictedSequence()

            legal = legal_actions(graph, state)
            flagged = False
            if safeguard:
                legal, flagged = safeguarded_legal(graph, state, g_next, legal)
            decision = _robot_decision(policy, graph, state, history, predicted, thread_map, legal, g_next)

            if decision.is_execute:
                relaxed = flagged and decision.node == g_next
                state = apply_step(graph, state, decision.node, relaxed=relaxed)
                history = history.with_robot(decision.node)
                uses += int(relaxed)
                robot_acted = True
                events.append(RolloutEvent(t, "robot", "execute", decision.node, decision.reason.value,
                                           thread_of(thread_map, decision.node), relaxed,
                                           decision.breakdown.h_mix if decision.breakdown else None,
                                           decision.candidates))
            else:
                events.append(RolloutEvent(t, "robot", "wait", None, decision.reason.value, None,
                                           candidates=decision.candidates))

        idle_rounds = 0 if (human_acted or robot_acted) else idle_rounds + 1
        if idle_rounds >= stall_rounds:
            stalled = True
            logger.warning("Vidéo %s bloquée après %d tours sans action (t=%d)",
                           trajectory.video_id, idle_rounds, t)
            break
        t += 1

    h = sum(1 for e in events if e.agent == "human" and e.is_execute)
    return RolloutLog(
        video_id=trajectory.video_id, task=trajectory.task, policy=policy.value,
        events=tuple(events), final_executed=tuple(sorted(state.executed)),
        complete=is_complete(graph, state), b=len(trajectory.steps), h=h,
        stalled=stalled, safeguard_uses=uses,
    )


def replay_log(graph: TaskGraph, log: RolloutLog) -> ProgressionState:
    """
    Rejoue les événements Execute d'un journal à travers le noyau du graphe

    Raises:
        InvariantViolation: action illégale non signalée ou état final différent
    """
    state = initial_state(graph)
    for event in log.events:
        if not event.is_execute:
            continue
        try:
            state = apply_step(graph, state, event.node, relaxed=event.safeguard)
        except IllegalActionError as exc:
            raise InvariantViolation(
                f"Rejeu impossible pour {log.video_id} à t={event.timestep}: {exc.message}",
                [(log.video_id, f"t={event.timestep} {event.agent} {event.node}")],
            ) from exc

    if tuple(sorted(state.executed)) != tuple(log.final_executed):
        raise InvariantViolation(f"État final non reproduit pour {log.video_id}",
                                 [(log.video_id, "final_executed")])
    return state


# ============================================================================
# DÉCISIONS EN LIGNE
# ============================================================================

def online_decisions(graph: TaskGraph, thread_map: ThreadMap, trajectory: Trajectory,
                     predictions: Mapping[int, StepPrediction], policy="entropy") -> OnlineDecisions:
    """
    Une décision robot par pas de temps, sur l'état reconstruit du préfixe annoté

    Chaque décision est contrefactuelle : l'historique robot est vide et l'état
    est celui obtenu après les t premières étapes humaines (sans garde-fou).
    """
    policy = Policy(policy)
    if policy == Policy.NONE:
        raise ValueError("La politique 'none' ne produit aucune décision robot")

    truth = set(trajectory.steps)
    labels = [graph.node(s).label for s in trajectory.steps]
    samples, skipped = [], 0

    for t in range(len(trajectory.steps)):
        prediction = predictions.get(t)
        if prediction is None:
            skipped += 1
            continue

        prefix = trajectory.steps[:t]
        state = state_from_executed(graph, prefix)
        history = ExecutionHistory(human=prefix)
        predicted = prediction.predicted(graph)
        future = PredictedSequence.from_labels(graph, prediction.future_steps)
        if policy == Policy.ENTROPY:
            decision = select_action_entropy(graph, state, history, predicted, thread_map)
        else:
            decision = select_action_greedy(graph, state, history, predicted, thread_map)

        h_prev_thread = thread_of(thread_map, prefix[-1]) if prefix else None
        action_thread = thread_of(thread_map, decision.node) if decision.is_execute else None
        current = prediction.current_step
        samples.append(DecisionSample(
            video_id=trajectory.video_id, task=trajectory.task, timestep=t,
            executed=tuple(sorted(state.executed)), human=prefix, robot=(),
            predicted=predicted.steps, unresolved=future.unresolved,
            ground_truth_next=trajectory.steps[t], decision=decision,
            correct=decision.is_execute and decision.node in truth,
            parallel=decision.is_execute and h_prev_thread is not None and action_thread != h_prev_thread,
            h_prev_thread=h_prev_thread, action_thread=action_thread,
            predicted_trigger=prediction.trigger, true_trigger=trajectory.needs_trigger(t),
            current_step=current,
            current_in_vocabulary=not current or bool(resolve_labels(graph, [current])[0]),
            future_labels=tuple(prediction.future_steps),
            truth_future_labels=tuple(labels[t:t + MAX_FUTURE_STEPS]),
        ))

    if skipped:
        logger.warning("Vidéo %s: %d pas sans prédiction ignorés", trajectory.video_id, skipped)
    return OnlineDecisions(samples, skipped, trajectory.video_id, trajectory.task, policy.value)


# ============================================================================
# EXÉCUTION PAR LOT
# ============================================================================

@dataclass(frozen=True)
class RolloutJob:
    graph: TaskGraph
    thread_map: ThreadMap
    trajectory: Trajectory
    policy: str = "entropy"
    predictions: Optional[Dict[int, StepPrediction]] = None
    safeguard: bool = True
    stall_rounds: int = DEFAULT_STALL_ROUNDS
    mode: str = "full"


def run_job(job: RolloutJob):
    if job.mode == "online":
        return online_decisions(job.graph, job.thread_map, job.trajectory, job.predictions or {}, job.policy)
    return rollout(job.graph, job.thread_map, job.trajectory, job.policy, job.predictions,
                   job.safeguard, job.stall_rounds)


def run_jobs(jobs: Sequence[RolloutJob], workers: int = 1) -> list:
    """Exécute les vidéos indépendamment ; l'ordre des résultats suit l'ordre d'entrée"""
    if workers <= 1 or len(jobs) <= 1:
        return [run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_job, jobs))
