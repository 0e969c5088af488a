"""
Module d'export : documents de graphe, rendu DOT, fichiers d'enregistrements
et tableaux de rapport.
"""

import json
import logging
from pathlib import Path

import graphviz
import pandas as pd

from filter.data_loading import GraphDocument
from functions.graph_core import GateType, NodeKind, TaskGraph, topological_order
from functions.threads import ThreadMap, thread_of

logger = logging.getLogger(__name__)

THREAD_COLORS = [
    "lightgrey", "lightblue", "lightgreen", "lightyellow", "lightcoral",
    "plum", "lightsalmon", "paleturquoise", "khaki", "thistle",
]

KIND_SHAPES = {
    NodeKind.EXECUTABLE: "box",
    NodeKind.START: "circle",
    NodeKind.TERMINATE: "doublecircle",
    NodeKind.MID_START: "invtriangle",
    NodeKind.MID_END: "triangle",
}


def serialize_graph_document(graph_or_document) -> str:
    """Sérialise un graphe (ou un GraphDocument, champs inconnus compris) en JSON"""
    document = graph_or_document
    if isinstance(graph_or_document, TaskGraph):
        document = GraphDocument.from_graph(graph_or_document)
    return json.dumps(document.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


def export_dot(graph: TaskGraph, thread_map: ThreadMap) -> str:
    """
    Rendu DOT déterministe du graphe

    La couleur de remplissage encode le fil (classe `thread_k`), la forme le
    type de nœud et le style du contour la porte (pleine = AND, tirets = OR).
    """
    dot = graphviz.Digraph(name=graph.task, comment=f"Graphe de tâche {graph.task}")
    dot.attr(rankdir="TB", bgcolor="white", fontname="Arial")
    dot.attr("node", fontname="Arial")

    for v in topological_order(graph):
        node = graph.nodes[v]
        k = thread_of(thread_map, v)
        style = "filled" if node.gate == GateType.AND else "filled,dashed"
        dot.node(
            v,
            node.label or v,
            shape=KIND_SHAPES[node.kind],
            style=style,
            fillcolor=THREAD_COLORS[k % len(THREAD_COLORS)],
            **{"class": f"thread_{k} {node.kind.value} {node.gate.value}"},
        )

    for u, v in sorted(graph.edges):
        dot.edge(u, v)

    return dot.source


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def records_to_jsonl(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def write_records(path, records) -> Path:
    """Écrit un fichier JSON Lines (une ligne par enregistrement)"""
    return write_text(path, records_to_jsonl(records))


def report_table(report) -> pd.DataFrame:
    """Tableau une ligne : SS, E, ER, PA puis décomposition et effectifs"""
    row = {"SS": report.ss, "E": report.e, "ER": report.er, "PA": report.pa}
    if report.ed is not None:
        row["ED"] = report.ed
    row.update({f"wait.{k}": v for k, v in report.waits.items()})
    row.update({f"halluc.{k}": v for k, v in report.hallucinations.items() if not k.endswith("_rate")})
    row.update({f"N.{k}": v for k, v in report.n.items()})
    return pd.DataFrame([row], index=[report.mode])


def breakdown_table(breakdown) -> pd.DataFrame:
    """Tableau de la décomposition d'entropie (une ligne par fil non vide)"""
    frame = pd.DataFrame(
        [{"thread": t.thread, "n_hum": t.n_human, "n_rob": t.n_robot, "p": t.p, "H": t.h, "w": t.w}
         for t in breakdown.threads],
        columns=["thread", "n_hum", "n_rob", "p", "H", "w"],
    )
    return frame.set_index("thread")
