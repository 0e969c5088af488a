"""
Module du graphe de tâche ET/OU
Représentation, validation et requêtes de légalité / complétion sur le DAG
d'une tâche (étapes exécutables, nœuds structurels start/terminate et paires
de nœuds de niveau intermédiaire).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx

from functions.clean import clean_step_label
from functions.errors import (
    GraphParseError, IllegalActionError, UnknownNodeError, UnvalidatedGraphError
)

logger = logging.getLogger(__name__)


# ============================================================================
# TYPES DU DOMAINE
# ============================================================================

class NodeKind(str, Enum):
    EXECUTABLE = "executable"
    START = "start"
    TERMINATE = "terminate"
    MID_START = "mid_start"
    MID_END = "mid_end"


class GateType(str, Enum):
    AND = "AND"
    OR = "OR"


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    kind: NodeKind
    gate: GateType = GateType.AND
    pair: Optional[str] = None

    @property
    def is_executable(self) -> bool:
        return self.kind == NodeKind.EXECUTABLE


@dataclass(frozen=True)
class PriorityScores:
    """Scores de priorité notés 1..3 (stockés, non utilisés par la planification)"""
    urgency: int
    value: int
    priority: int


@dataclass(frozen=True)
class TaskGraph:
    task: str
    nodes: Dict[str, Node]
    edges: FrozenSet[Tuple[str, str]]
    priority: Optional[PriorityScores] = None

    @classmethod
    def from_parts(cls, task: str, nodes: Iterable[Node], edges: Iterable[Tuple[str, str]],
                   priority: Optional[PriorityScores] = None) -> "TaskGraph":
        """
        Construit un graphe en vérifiant que les identifiants se résolvent

        Raises:
            GraphParseError: identifiant dupliqué ou extrémité d'arête inconnue
        """
        by_id: Dict[str, Node] = {}
        loci = []
        for node in nodes:
            if node.id in by_id:
                loci.append((f"node:{node.id}", "identifiant dupliqué"))
                continue
            by_id[node.id] = node

        edge_set = set()
        for u, v in edges:
            for end in (u, v):
                if end not in by_id:
                    loci.append((f"edge:{u}->{v}", f"extrémité inconnue {end!r}"))
            edge_set.add((u, v))

        if loci:
            raise GraphParseError(f"Graphe {task!r} mal formé", loci)

        ordered = {node_id: by_id[node_id] for node_id in sorted(by_id)}
        return cls(task=task, nodes=ordered, edges=frozenset(edge_set), priority=priority)

    # ------------------------------------------------------------------
    # Index dérivés (calculés une seule fois, le graphe est immuable)
    # ------------------------------------------------------------------

    @cached_property
    def digraph(self) -> nx.DiGraph:
        dg = nx.DiGraph()
        dg.add_nodes_from(self.nodes)
        dg.add_edges_from(sorted(self.edges))
        return dg

    @cached_property
    def _predecessors(self) -> Dict[str, Tuple[str, ...]]:
        return {v: tuple(sorted(self.digraph.predecessors(v))) for v in self.nodes}

    @cached_property
    def _successors(self) -> Dict[str, Tuple[str, ...]]:
        return {v: tuple(sorted(self.digraph.successors(v))) for v in self.nodes}

    @cached_property
    def node_ids(self) -> Tuple[str, ...]:
        return tuple(self.nodes)

    @cached_property
    def executable_ids(self) -> Tuple[str, ...]:
        return tuple(v for v, node in self.nodes.items() if node.is_executable)

    @cached_property
    def structural_ids(self) -> Tuple[str, ...]:
        return tuple(v for v, node in self.nodes.items() if not node.is_executable)

    @cached_property
    def start_id(self) -> Optional[str]:
        return next((v for v, n in self.nodes.items() if n.kind == NodeKind.START), None)

    @cached_property
    def terminate_id(self) -> Optional[str]:
        return next((v for v, n in self.nodes.items() if n.kind == NodeKind.TERMINATE), None)

    @cached_property
    def label_index(self) -> Dict[str, str]:
        """Libellé normalisé -> NodeId (étapes exécutables, premier id en cas de doublon)"""
        index = {}
        for v in self.executable_ids:
            index.setdefault(clean_step_label(self.nodes[v].label), v)
        return index

    @cached_property
    def _reach_cache(self) -> Dict[str, FrozenSet[str]]:
        return {}

    def node(self, v: str) -> Node:
        try:
            return self.nodes[v]
        except KeyError:
            raise UnknownNodeError(v) from None

    def predecessors(self, v: str) -> Tuple[str, ...]:
        self.node(v)
        return self._predecessors[v]

    def successors(self, v: str) -> Tuple[str, ...]:
        self.node(v)
        return self._successors[v]

    def reach(self, b: str) -> FrozenSet[str]:
        """Version interne (ensemble) de reachable_set, mise en cache"""
        cached = self._reach_cache.get(b)
        if cached is None:
            self.node(b)
            cached = frozenset(nx.descendants(self.digraph, b)) | {b}
            self._reach_cache[b] = cached
        return cached


@dataclass(frozen=True)
class ProgressionState:
    """Ensemble des nœuds exécutés Prog_t et compteur de pas de temps"""
    executed: FrozenSet[str] = field(default_factory=frozenset)
    timestep: int = 0


@dataclass(frozen=True)
class Violation:
    rule: str
    nodes: Tuple[str, ...] = ()
    edges: Tuple[Tuple[str, str], ...] = ()
    message: str = ""

    def locus(self) -> str:
        if self.edges:
            return ", ".join(f"{u}->{v}" for u, v in self.edges)
        return ", ".join(self.nodes)

    def to_record(self) -> dict:
        return {
            "rule": self.rule,
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "message": self.message,
        }


class ValidationReport(list):
    """Liste de violations (vide si le graphe respecte tous les invariants)"""

    def rules(self) -> List[str]:
        return sorted({v.rule for v in self})

    def to_records(self) -> List[dict]:
        return [v.to_record() for v in self]


# ============================================================================
# VALIDATION
# ============================================================================

def _branch_region(graph: TaskGraph, head: str, siblings: Iterable[str]) -> FrozenSet[str]:
    """Nœuds atteignables depuis une tête de branche sans traverser les branches sœurs"""
    blocked = set(siblings) - {head}
    view = nx.subgraph_view(graph.digraph, filter_node=lambda n: n not in blocked)
    return frozenset(nx.descendants(view, head)) | {head}


def _check_branch_independence(graph: TaskGraph, report: ValidationReport):
    for u, node in graph.nodes.items():
        if node.kind != NodeKind.MID_START or node.pair not in graph.nodes:
            continue
        u_end = node.pair
        before_merge = frozenset(nx.ancestors(graph.digraph, u_end))
        heads = graph.successors(u)
        regions = {b: _branch_region(graph, b, heads) & before_merge for b in heads}

        for i, b_i in enumerate(heads):
            for b_j in heads[i + 1:]:
                only_i = regions[b_i] - regions[b_j]
                only_j = regions[b_j] - regions[b_i]
                crossing = sorted(
                    (x, y) for x, y in graph.edges
                    if (x in only_i and y in only_j) or (x in only_j and y in only_i)
                )
                if crossing:
                    report.append(Violation(
                        "branch_independence",
                        nodes=(u, b_i, b_j),
                        edges=tuple(crossing),
                        message=f"Arête entre les branches exclusives {b_i} et {b_j} de {u}",
                    ))


def validate_graph(graph: TaskGraph) -> ValidationReport:
    """
    Vérifie tous les invariants d'un graphe de tâche

    Règles : acyclicity, start_count, terminate_count, mid_pairing,
    missing_predecessor, dead_end, isolated_node, reachability,
    duplicate_label, branch_independence.

    Args:
        graph: Graphe dont les identifiants sont déjà résolus

    Returns:
        ValidationReport: vide si et seulement si le graphe est valide
    """
    report = ValidationReport()
    dg = graph.digraph

    # Acyclicité : une violation par composante fortement connexe cyclique
    if not nx.is_directed_acyclic_graph(dg):
        for component in sorted(nx.strongly_connected_components(dg), key=min):
            members = sorted(component)
            if len(members) == 1 and not dg.has_edge(members[0], members[0]):
                continue
            sub = dg.subgraph(members)
            cycle = nx.find_cycle(sub, source=members[0])
            report.append(Violation(
                "acyclicity",
                nodes=tuple(members),
                edges=tuple((u, v) for u, v in cycle),
                message="Cycle détecté",
            ))

    for kind, rule in ((NodeKind.START, "start_count"), (NodeKind.TERMINATE, "terminate_count")):
        found = tuple(v for v, n in graph.nodes.items() if n.kind == kind)
        if len(found) != 1:
            report.append(Violation(rule, nodes=found,
                                    message=f"{len(found)} nœud(s) {kind.value}, exactement 1 attendu"))

    for v, node in graph.nodes.items():
        if node.kind in (NodeKind.MID_START, NodeKind.MID_END):
            expected = NodeKind.MID_END if node.kind == NodeKind.MID_START else NodeKind.MID_START
            other = graph.nodes.get(node.pair) if node.pair else None
            if other is None or other.kind != expected or other.pair != v:
                report.append(Violation("mid_pairing", nodes=(v,),
                                        message=f"Paire {node.pair!r} invalide pour {v}"))
            elif node.kind == NodeKind.MID_START and node.pair not in graph.reach(v):
                report.append(Violation("mid_pairing", nodes=(v, node.pair),
                                        message=f"{node.pair} n'est pas atteignable depuis {v}"))
        elif node.pair is not None:
            report.append(Violation("mid_pairing", nodes=(v,),
                                    message=f"{v} n'est pas un nœud intermédiaire mais porte une paire"))

    for v, node in graph.nodes.items():
        has_pred = bool(graph.predecessors(v))
        has_succ = bool(graph.successors(v))
        if not has_pred and not has_succ and node.kind not in (NodeKind.START, NodeKind.TERMINATE):
            report.append(Violation("isolated_node", nodes=(v,), message=f"{v} est isolé"))
            continue
        if not has_pred and node.kind != NodeKind.START:
            report.append(Violation("missing_predecessor", nodes=(v,),
                                    message=f"{v} n'a aucun prédécesseur"))
        if not has_succ and node.kind != NodeKind.TERMINATE:
            report.append(Violation("dead_end", nodes=(v,), message=f"{v} est un cul-de-sac"))

    if graph.start_id is not None and graph.terminate_id is not None:
        if graph.terminate_id not in graph.reach(graph.start_id):
            report.append(Violation("reachability", nodes=(graph.start_id, graph.terminate_id),
                                    message="Terminate n'est pas atteignable depuis Start"))

    seen_labels: Dict[str, str] = {}
    for v in graph.executable_ids:
        label = clean_step_label(graph.nodes[v].label)
        if label in seen_labels:
            report.append(Violation("duplicate_label", nodes=(seen_labels[label], v),
                                    message=f"Libellé ambigu {label!r}"))
        else:
            seen_labels[label] = v

    _check_branch_independence(graph, report)

    if report:
        logger.debug("Graphe %s: %d violation(s) %s", graph.task, len(report), report.rules())
    return report


# ============================================================================
# REQUÊTES
# ============================================================================

def reachable_set(graph: TaskGraph, b: str) -> Tuple[str, ...]:
    """Reach(b) : b et tous les nœuds atteignables par un chemin orienté, triés"""
    return tuple(sorted(graph.reach(b)))


def topological_order(graph: TaskGraph) -> Tuple[str, ...]:
    """Ordre topologique déterministe (départage par NodeId)"""
    try:
        return tuple(nx.lexicographical_topological_sort(graph.digraph))
    except nx.NetworkXUnfeasible:
        raise UnvalidatedGraphError(validate_graph(graph)) from None


def _gate_satisfied(graph: TaskGraph, v: str, executed: FrozenSet[str]) -> bool:
    preds = graph._predecessors[v]
    if not preds:
        return True
    if graph.nodes[v].gate == GateType.AND:
        return all(p in executed for p in preds)
    return any(p in executed for p in preds)


def explain_gate(graph: TaskGraph, state: ProgressionState, v: str) -> str:
    """Explication lisible de l'état de la porte d'un nœud"""
    node = graph.node(v)
    preds = graph.predecessors(v)
    if node.gate == GateType.AND:
        missing = [p for p in preds if p not in state.executed]
        if missing:
            return f"porte AND de {v}: prédécesseurs manquants {missing}"
        return f"porte AND de {v}: satisfaite"
    if preds and not any(p in state.executed for p in preds):
        return f"porte OR de {v}: aucun prédécesseur exécuté parmi {list(preds)}"
    return f"porte OR de {v}: satisfaite"


def propagate(graph: TaskGraph, executed: Iterable[str]) -> FrozenSet[str]:
    """Point fixe : ajoute chaque nœud structurel dont la porte devient satisfaite"""
    current = set(executed)
    changed = True
    while changed:
        changed = False
        for v in graph.structural_ids:
            if v not in current and _gate_satisfied(graph, v, current):
                current.add(v)
                changed = True
    return frozenset(current)


def initial_state(graph: TaskGraph) -> ProgressionState:
    """État initial : les racines structurelles (Start) sont satisfaites d'office"""
    return ProgressionState(executed=propagate(graph, ()), timestep=0)


def state_from_executed(graph: TaskGraph, executed: Iterable[str]) -> ProgressionState:
    """
    Construit un état cohérent à partir d'étapes exécutables déjà réalisées

    Args:
        graph: Graphe de la tâche
        executed: Étapes exécutables réalisées (sans vérification de légalité)

    Returns:
        ProgressionState: fermeture par propagation, timestep = nombre d'étapes
    """
    steps = set()
    for v in executed:
        if not graph.node(v).is_executable:
            raise IllegalActionError(f"{v} n'est pas une étape exécutable", [(v, "kind")])
        steps.add(v)
    return ProgressionState(executed=propagate(graph, steps), timestep=len(steps))


def legal_actions(graph: TaskGraph, state: ProgressionState) -> Tuple[str, ...]:
    """
    Ensemble légal A_t : étapes exécutables non exécutées dont la porte est satisfaite

    Returns:
        tuple: NodeIds triés
    """
    executed = state.executed
    return tuple(
        v for v in graph.executable_ids
        if v not in executed and _gate_satisfied(graph, v, executed)
    )


def apply_step(graph: TaskGraph, state: ProgressionState, a: str, relaxed: bool = False) -> ProgressionState:
    """
    Exécute une étape puis propage les nœuds structurels (sans consommer de temps)

    Args:
        graph: Graphe de la tâche
        state: État courant (non modifié)
        a: Étape exécutable à appliquer
        relaxed: Admet une étape dont la porte n'est pas satisfaite (garde-fou anti-blocage)

    Returns:
        ProgressionState: nouvel état, timestep + 1

    Raises:
        UnknownNodeError, IllegalActionError
    """
    node = graph.node(a)
    if not node.is_executable:
        raise IllegalActionError(f"{a} n'est pas une étape exécutable", [(a, "kind")])
    if a in state.executed:
        raise IllegalActionError(f"{a} est déjà exécutée", [(a, "executed")])
    if not relaxed and not _gate_satisfied(graph, a, state.executed):
        explanation = explain_gate(graph, state, a)
        raise IllegalActionError(f"Action illégale: {explanation}", [(a, explanation)])

    executed = propagate(graph, state.executed | {a})
    logger.debug("apply_step %s%s -> +%s", a, " (relâché)" if relaxed else "",
                 sorted(executed - state.executed - {a}))
    return ProgressionState(executed=executed, timestep=state.timestep + 1)


def is_complete(graph: TaskGraph, state: ProgressionState) -> bool:
    return graph.terminate_id is not None and graph.terminate_id in state.executed


def is_consistent(graph: TaskGraph, state: ProgressionState) -> bool:
    """Cohérence avec les contraintes de progression ET/OU (hors exécutions relâchées)"""
    for v in state.executed:
        if v not in graph.nodes:
            return False
        preds = graph._predecessors[v]
        if not preds:
            continue
        if graph.nodes[v].gate == GateType.AND and not all(p in state.executed for p in preds):
            return False
        if graph.nodes[v].gate == GateType.OR and not any(p in state.executed for p in preds):
            return False
    return True


def resolve_labels(graph: TaskGraph, labels: Iterable[str]) -> Tuple[List[str], List[str]]:
    """
    Résout des libellés (ou des NodeIds) en étapes exécutables

    Returns:
        tuple: (NodeIds résolus dans l'ordre, libellés non résolus)
    """
    resolved, unresolved = [], []
    for label in labels:
        if label in graph.nodes and graph.nodes[label].is_executable:
            resolved.append(label)
            continue
        node_id = graph.label_index.get(clean_step_label(label))
        if node_id is None:
            unresolved.append(label)
        else:
            resolved.append(node_id)
    return resolved, unresolved
