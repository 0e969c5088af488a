"""
Module de planification proactive du robot
Sélection de la prochaine action par minimisation, à un pas, de l'entropie de
mélange des fils humain/robot, et ligne de base gloutonne.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from functions.graph_core import ProgressionState, TaskGraph, legal_actions, resolve_labels
from functions.threads import ThreadMap, thread_of

logger = logging.getLogger(__name__)


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class ExecutionHistory:
    human: Tuple[str, ...] = ()
    robot: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "human", tuple(self.human))
        object.__setattr__(self, "robot", tuple(self.robot))
        overlap = set(self.human) & set(self.robot)
        if overlap or len(set(self.human)) != len(self.human) or len(set(self.robot)) != len(self.robot):
            raise ValueError(f"Historique avec doublons: {sorted(overlap) or 'intra-agent'}")

    @property
    def executed(self) -> frozenset:
        return frozenset(self.human) | frozenset(self.robot)

    def with_human(self, a: str) -> "ExecutionHistory":
        return ExecutionHistory(self.human + (a,), self.robot)

    def with_robot(self, a: str) -> "ExecutionHistory":
        return ExecutionHistory(self.human, self.robot + (a,))


@dataclass(frozen=True)
class PredictedSequence:
    """Séquence prédite A_pred : étapes résolues + libellés hors vocabulaire"""
    steps: Tuple[str, ...] = ()
    unresolved: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "unresolved", tuple(self.unresolved))

    @classmethod
    def from_labels(cls, graph: TaskGraph, labels: Iterable[str]) -> "PredictedSequence":
        resolved, unresolved = resolve_labels(graph, labels)
        if unresolved:
            logger.debug("Libellés prédits hors vocabulaire: %s", unresolved)
        return cls(tuple(resolved), tuple(unresolved))

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps) + len(self.unresolved)


@dataclass(frozen=True)
class ThreadEntropy:
    thread: int
    n_human: int
    n_robot: int
    p: float
    h: float
    w: float


@dataclass(frozen=True)
class EntropyBreakdown:
    threads: Tuple[ThreadEntropy, ...]
    h_mix: float
    candidate: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "candidate": self.candidate,
            "h_mix": self.h_mix,
            "threads": [
                {"thread": t.thread, "n_human": t.n_human, "n_robot": t.n_robot,
                 "p": t.p, "h": t.h, "w": t.w}
                for t in self.threads
            ],
        }


class ActionKind(str, Enum):
    EXECUTE = "execute"
    WAIT = "wait"


class DecisionReason(str, Enum):
    CHOSEN = "chosen"
    EMPTY_CANDIDATES = "empty_candidates"
    FORCED_WAIT = "forced_wait"


@dataclass(frozen=True)
class RobotAction:
    kind: ActionKind
    reason: DecisionReason
    node: Optional[str] = None
    breakdown: Optional[EntropyBreakdown] = None
    candidates: Tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def execute(cls, node, breakdown=None, candidates=()):
        return cls(ActionKind.EXECUTE, DecisionReason.CHOSEN, node, breakdown, tuple(candidates))

    @classmethod
    def wait(cls, reason, candidates=()):
        return cls(ActionKind.WAIT, reason, None, None, tuple(candidates))

    @property
    def is_execute(self) -> bool:
        return self.kind == ActionKind.EXECUTE

    def __str__(self):
        if self.is_execute:
            return f"Execute({self.node})"
        return f"Wait({self.reason.value})"


# ============================================================================
# NOYAU D'ENTROPIE
# ============================================================================

def thread_counts(history: ExecutionHistory, candidate: Optional[str], thread_map: ThreadMap) -> Dict[int, Tuple[int, int]]:
    """
    Nombre d'étapes par fil et par agent (n_k^hum, n_k^rob)

    Args:
        history: Historiques humain / robot
        candidate: Action contrefactuelle ajoutée côté robot (ou None)
        thread_map: Application π

    Returns:
        dict: fil -> (n_hum, n_rob), tous les fils de π inclus (zéros compris)
    """
    human = Counter(thread_of(thread_map, x) for x in history.human)
    robot_steps = list(history.robot) + ([candidate] if candidate is not None else [])
    robot = Counter(thread_of(thread_map, x) for x in robot_steps)
    return {k: (human.get(k, 0), robot.get(k, 0)) for k in thread_map.thread_ids}


def binary_entropy(p: float) -> float:
    """
    Entropie binaire en base 2, H(0) = H(1) = 0

    Raises:
        ValueError: p hors de [0, 1]
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Probabilité hors de [0, 1]: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    return float(-p * np.log2(p) - q * np.log2(q))


def _split_entropy(n_human: int, n_robot: int) -> float:
    # symétrique en (n_hum, n_rob) : p et q sont tous deux calculés depuis les comptes
    if n_human == 0 or n_robot == 0:
        return 0.0
    total = n_human + n_robot
    p, q = n_human / total, n_robot / total
    return float(-p * np.log2(p) - q * np.log2(q))


def mixing_entropy(history: ExecutionHistory, candidate: Optional[str], thread_map: ThreadMap) -> EntropyBreakdown:
    """
    Entropie de mélange H_mix = Σ w_k · H_k(p_k), pondérée par la longueur des fils

    Les fils sans aucune étape sont exclus de la normalisation des poids.
    """
    counts = thread_counts(history, candidate, thread_map)
    grand_total = sum(h + r for h, r in counts.values())
    records = []
    for k, (n_h, n_r) in sorted(counts.items()):
        total = n_h + n_r
        if total == 0:
            continue
        records.append(ThreadEntropy(
            thread=k, n_human=n_h, n_robot=n_r,
            p=n_h / total, h=_split_entropy(n_h, n_r), w=total / grand_total,
        ))
    h_mix = math.fsum(t.w * t.h for t in records)
    return EntropyBreakdown(threads=tuple(records), h_mix=h_mix, candidate=candidate)


# ============================================================================
# SÉLECTION D'ACTION
# ============================================================================

def candidate_set(legal: Iterable[str], predicted: Iterable[str]) -> Tuple[str, ...]:
    """Intersection légal ∩ prédit, sans doublons, dans l'ordre prédit"""
    legal_set = set(legal)
    seen = set()
    result = []
    for a in predicted:
        if a in legal_set and a not in seen:
            seen.add(a)
            result.append(a)
    return tuple(result)


def _ordered_candidates(legal, predicted, demote) -> Tuple[str, ...]:
    candidates = candidate_set(legal, predicted)
    if demote is not None and demote in candidates and len(candidates) > 1:
        candidates = tuple(a for a in candidates if a != demote) + (demote,)
    return candidates


def _wait_reason(predicted: Sequence[str]) -> DecisionReason:
    if len(predicted) == 0:
        return DecisionReason.EMPTY_CANDIDATES
    return DecisionReason.FORCED_WAIT


def select_action_entropy(graph: TaskGraph, state: ProgressionState, history: ExecutionHistory,
                          predicted, thread_map: ThreadMap, *, legal=None, demote: Optional[str] = None) -> RobotAction:
    """
    Choix à un pas : argmin de H_mix(H_t, R_t ∪ {a}) sur les candidats

    Les égalités sont départagées par la position dans la séquence prédite.

    Args:
        graph: Graphe de la tâche
        state: État de progression courant
        history: Historiques humain / robot
        predicted: Séquence prédite (PredictedSequence ou liste de NodeIds)
        thread_map: Application π
        legal: Ensemble légal à utiliser à la place de legal_actions (garde-fou)
        demote: Étape reléguée en dernière position (prochaine étape humaine)

    Returns:
        RobotAction: Execute(a) avec sa décomposition, ou Wait avec son motif
    """
    if legal is None:
        legal = legal_actions(graph, state)
    candidates = _ordered_candidates(legal, predicted, demote)
    if not candidates:
        return RobotAction.wait(_wait_reason(predicted))

    scored = [(mixing_entropy(history, a, thread_map), position) for position, a in enumerate(candidates)]
    best, _ = min(scored, key=lambda item: (item[0].h_mix, item[1]))
    logger.debug("Entropie: %s -> %s (H_mix=%.6f)",
                 [(bd.candidate, round(bd.h_mix, 6)) for bd, _ in scored], best.candidate, best.h_mix)
    return RobotAction.execute(best.candidate, best, candidates)


def select_action_greedy(graph: TaskGraph, state: ProgressionState, history: ExecutionHistory,
                         predicted, thread_map: Optional[ThreadMap] = None, *, legal=None,
                         demote: Optional[str] = None) -> RobotAction:
    """Ligne de base : premier candidat légal dans l'ordre prédit"""
    if legal is None:
        legal = legal_actions(graph, state)
    candidates = _ordered_candidates(legal, predicted, demote)
    if not candidates:
        return RobotAction.wait(_wait_reason(predicted))

    chosen = candidates[0]
    breakdown = mixing_entropy(history, chosen, thread_map) if thread_map is not None else None
    return RobotAction.execute(chosen, breakdown, candidates)
