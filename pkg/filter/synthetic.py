"""
Génération synthétique reproductible (numpy default_rng) :
graphes à régions, graphes à portes aléatoires, trajectoires conformes et
trajectoires perturbées (un prérequis omis).
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from functions.graph_core import (
    GateType, Node, NodeKind, TaskGraph, apply_step, initial_state, is_complete, legal_actions
)

logger = logging.getLogger(__name__)


class _GraphBuilder:
    def __init__(self):
        self.nodes: List[Node] = []
        self.edges: List[Tuple[str, str]] = []
        self.steps = 0
        self.regions = 0

    def step(self, gate=GateType.AND) -> str:
        self.steps += 1
        node_id = f"s{self.steps:02d}"
        self.nodes.append(Node(node_id, f"étape {self.steps}", NodeKind.EXECUTABLE, gate))
        return node_id

    def structural(self, node_id, kind, gate=GateType.AND, pair=None) -> str:
        self.nodes.append(Node(node_id, node_id, kind, gate, pair))
        return node_id

    def edge(self, u, v):
        self.edges.append((u, v))

    def chain(self, tail: str, length: int) -> str:
        for _ in range(length):
            v = self.step()
            self.edge(tail, v)
            tail = v
        return tail


def _region(builder: _GraphBuilder, rng, tail: str, depth: int, max_branches: int, max_branch_len: int,
            overlap_prob: float, nested_prob: float, or_prob: float) -> str:
    builder.regions += 1
    k = builder.regions
    start_id, end_id = f"M{k}", f"M{k}'"
    end_gate = GateType.OR if rng.random() < or_prob else GateType.AND
    builder.structural(start_id, NodeKind.MID_START, pair=end_id)
    builder.structural(end_id, NodeKind.MID_END, gate=end_gate, pair=start_id)
    builder.edge(tail, start_id)

    ends = []
    for _ in range(int(rng.integers(2, max_branches, endpoint=True))):
        if depth == 0 and rng.random() < nested_prob:
            inner_end = _region(builder, rng, start_id, depth + 1, max_branches, max_branch_len,
                                overlap_prob, 0.0, or_prob)
            ends.append(builder.chain(inner_end, 1))
        else:
            ends.append(builder.chain(start_id, int(rng.integers(1, max_branch_len, endpoint=True))))

    if len(ends) >= 2 and rng.random() < overlap_prob:
        shared = builder.step()
        builder.edge(ends[0], shared)
        builder.edge(ends[1], shared)
        ends = [shared] + ends[2:]

    for e in ends:
        builder.edge(e, end_id)
    return end_id


def random_region_graph(rng, n_regions: Optional[int] = None, max_branches: int = 3, max_branch_len: int = 3,
                        overlap_prob: float = 0.0, nested_prob: float = 0.0, or_prob: float = 0.0,
                        task: str = "synthetique") -> TaskGraph:
    """
    Graphe valide : Start -> [étape] -> régions successives -> étape -> Terminate

    Args:
        rng: numpy.random.Generator
        n_regions: Nombre de régions (1 à 2 tiré au hasard si None)
        max_branches: Branches par région (au moins 2)
        max_branch_len: Longueur maximale d'une branche
        overlap_prob: Probabilité que deux branches convergent avant la fusion
        nested_prob: Probabilité qu'une branche contienne une région interne
        or_prob: Probabilité d'une porte OR sur le nœud de fin de région
    """
    builder = _GraphBuilder()
    tail = builder.structural("Start", NodeKind.START)
    if n_regions is None:
        n_regions = int(rng.integers(1, 2, endpoint=True))

    for _ in range(n_regions):
        if rng.random() < 0.5:
            tail = builder.chain(tail, 1)
        tail = _region(builder, rng, tail, 0, max_branches, max_branch_len, overlap_prob, nested_prob, or_prob)

    tail = builder.chain(tail, 1)
    builder.structural("Terminate", NodeKind.TERMINATE)
    builder.edge(tail, "Terminate")
    return TaskGraph.from_parts(task, builder.nodes, builder.edges)


def random_gate_graph(rng, n_nodes: int, edge_prob: float = 0.3, or_prob: float = 0.5) -> TaskGraph:
    """Graphe d'étapes exécutables à arêtes avant aléatoires et portes aléatoires"""
    nodes = [
        Node(f"n{i:02d}", f"n{i:02d}", NodeKind.EXECUTABLE,
             GateType.OR if rng.random() < or_prob else GateType.AND)
        for i in range(n_nodes)
    ]
    edges = [
        (f"n{i:02d}", f"n{j:02d}")
        for i in range(n_nodes) for j in range(i + 1, n_nodes)
        if rng.random() < edge_prob
    ]
    return TaskGraph.from_parts("aleatoire", nodes, edges)


def conforming_trajectory(rng, graph: TaskGraph) -> Tuple[str, ...]:
    """Extension linéaire aléatoire des étapes jusqu'à complétion"""
    state = initial_state(graph)
    steps = []
    while not is_complete(graph, state):
        legal = legal_actions(graph, state)
        if not legal:
            break
        a = legal[int(rng.integers(len(legal)))]
        state = apply_step(graph, state, a)
        steps.append(a)
    return tuple(steps)


def _blocks(graph: TaskGraph, steps) -> bool:
    state = initial_state(graph)
    for a in steps:
        if a not in legal_actions(graph, state):
            return True
        state = apply_step(graph, state, a)
    return False


def perturb_trajectory(rng, graph: TaskGraph, steps) -> Tuple[Tuple[str, ...], Optional[str]]:
    """
    Retire une étape dont l'absence bloque une étape ultérieure de l'annotation

    Returns:
        tuple: (trajectoire perturbée, étape retirée) ; (inchangée, None) si impossible
    """
    steps = tuple(steps)
    for index in rng.permutation(len(steps)):
        candidate = steps[:index] + steps[index + 1:]
        if candidate and _blocks(graph, candidate):
            return candidate, steps[index]
    return steps, None


def generate_corpus(seed: int, n_graphs: int = 3, videos_per_graph: int = 2, perturb: bool = False, **graph_kwargs):
    """
    Corpus synthétique : graphes à régions et enregistrements de trajectoires (libellés)

    Returns:
        tuple: (liste de TaskGraph, liste d'enregistrements de trajectoire)
    """
    rng = np.random.default_rng(seed)
    graphs, records = [], []
    for g in range(n_graphs):
        graph = random_region_graph(rng, task=f"synthetique-{g + 1}", **graph_kwargs)
        graphs.append(graph)
        for v in range(videos_per_graph):
            steps = conforming_trajectory(rng, graph)
            dropped = None
            if perturb:
                steps, dropped = perturb_trajectory(rng, graph, steps)
            record = {
                "video_id": f"{graph.task}-v{v + 1}",
                "task": graph.task,
                "steps": [graph.nodes[s].label for s in steps],
            }
            if dropped is not None:
                record["dropped"] = graph.nodes[dropped].label
            records.append(record)
    logger.info("Corpus synthétique: %d graphe(s), %d vidéo(s) (seed=%d)", len(graphs), len(records), seed)
    return graphs, records
