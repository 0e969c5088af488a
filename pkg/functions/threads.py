"""
Module de partition en fils d'exécution (threads)
Chaque nœud de début intermédiaire ouvre une région ; ses successeurs dont les
régions avant fusion se chevauchent partagent un identifiant de fil.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, Tuple

import networkx as nx
from networkx.utils import UnionFind

from functions.errors import UnknownNodeError, UnvalidatedGraphError
from functions.graph_core import NodeKind, TaskGraph, validate_graph

logger = logging.getLogger(__name__)

PRIMARY_THREAD = 0


@dataclass(frozen=True)
class ThreadMap:
    assignment: Dict[str, int]

    @cached_property
    def thread_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.assignment.values()) | {PRIMARY_THREAD}))

    def nodes_of(self, k: int) -> Tuple[str, ...]:
        return tuple(sorted(v for v, t in self.assignment.items() if t == k))

    def to_records(self) -> List[dict]:
        return [{"node": v, "thread": t} for v, t in sorted(self.assignment.items())]


def _pre_merge_region(graph: TaskGraph, b: str, before_merge: FrozenSet[str]) -> FrozenSet[str]:
    return graph.reach(b) & before_merge


def build_thread_map(graph: TaskGraph) -> ThreadMap:
    """
    Construit l'application π : NodeId -> identifiant de fil

    Les identifiants sont globalement uniques : chaque classe de successeurs
    reçoit un nouvel identifiant, consécutif au sein de sa région, dans l'ordre
    du plus petit NodeId de la classe. Les régions imbriquées sont traitées de
    l'extérieur vers l'intérieur, la plus interne décide.

    Args:
        graph: Graphe ayant passé validate_graph

    Returns:
        ThreadMap: application totale sur les nœuds du graphe

    Raises:
        UnvalidatedGraphError: si le rapport de validation n'est pas vide
    """
    report = validate_graph(graph)
    if report:
        raise UnvalidatedGraphError(report)

    assignment = {v: PRIMARY_THREAD for v in graph.node_ids}

    regions = []
    for u, node in graph.nodes.items():
        if node.kind != NodeKind.MID_START:
            continue
        before_merge = frozenset(nx.ancestors(graph.digraph, node.pair))
        heads = graph.successors(u)
        members = {b: _pre_merge_region(graph, b, before_merge) for b in heads}
        size = len(frozenset().union(*members.values())) if members else 0
        regions.append((size, u, heads, members))

    # extérieur d'abord : les régions internes écrasent
    regions.sort(key=lambda r: (-r[0], r[1]))

    next_id = PRIMARY_THREAD + 1
    for _, u, heads, members in regions:
        classes = UnionFind(heads)
        for i, b_i in enumerate(heads):
            for b_j in heads[i + 1:]:
                if members[b_i] & members[b_j]:
                    classes.union(b_i, b_j)

        groups = sorted((sorted(group) for group in classes.to_sets()), key=lambda g: g[0])
        for group in groups:
            # arête directe MidStart -> MidEnd : aucun nœud, aucun fil
            if not any(members[b] for b in group):
                continue
            for b in group:
                for v in members[b]:
                    assignment[v] = next_id
            logger.debug("Région %s: fil %d <- %s", u, next_id, group)
            next_id += 1

    return ThreadMap(assignment=assignment)


def thread_of(thread_map: ThreadMap, v: str) -> int:
    """Lecture π(v)"""
    try:
        return thread_map.assignment[v]
    except KeyError:
        raise UnknownNodeError(v) from None
