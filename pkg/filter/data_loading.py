"""
Module pour le chargement des données : documents de graphe (JSON), trajectoires
annotées, prédictions et journaux de simulation (JSON Lines).
Chaque erreur de lecture remonte avec ses loci (fichier:ligne, champ).
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from functions.errors import GraphParseError, IngestionError, UnvalidatedGraphError
from functions.graph_core import (
    GateType, Node, NodeKind, PriorityScores, TaskGraph, resolve_labels, validate_graph
)
from functions.simulator import (
    MAX_FUTURE_STEPS, RolloutEvent, RolloutLog, StepPrediction, Trajectory
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUPPORTED_SCHEMA_VERSIONS = (1,)


# ============================================================================
# SCHÉMAS
# ============================================================================

class NodeRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    id: str = Field(..., min_length=1)
    label: str = ""
    kind: NodeKind
    gate: GateType = GateType.AND
    pair: Optional[str] = None


class PriorityRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    urgency: int = Field(..., ge=1, le=3)
    value: int = Field(..., ge=1, le=3)
    priority: int = Field(..., ge=1, le=3)


class GraphDocument(BaseModel):
    """Document de graphe ; les champs inconnus sont conservés mais ignorés"""
    model_config = ConfigDict(extra="allow")

    schema_version: int = SCHEMA_VERSION
    task: str = Field(..., min_length=1)
    nodes: List[NodeRecord]
    edges: List[Tuple[str, str]] = Field(default_factory=list)
    priority: Optional[PriorityRecord] = None

    @field_validator("schema_version")
    @classmethod
    def check_version(cls, value):
        if value not in SUPPORTED_SCHEMA_VERSIONS:
            raise ValueError(f"version de schéma non supportée: {value}")
        return value

    def to_graph(self) -> TaskGraph:
        nodes = [Node(n.id, n.label, n.kind, n.gate, n.pair) for n in self.nodes]
        priority = None
        if self.priority is not None:
            priority = PriorityScores(self.priority.urgency, self.priority.value, self.priority.priority)
        return TaskGraph.from_parts(self.task, nodes, [tuple(e) for e in self.edges], priority)

    @classmethod
    def from_graph(cls, graph: TaskGraph) -> "GraphDocument":
        priority = None
        if graph.priority is not None:
            priority = PriorityRecord(urgency=graph.priority.urgency, value=graph.priority.value,
                                      priority=graph.priority.priority)
        return cls(
            task=graph.task,
            nodes=[NodeRecord(id=n.id, label=n.label, kind=n.kind, gate=n.gate, pair=n.pair)
                   for n in graph.nodes.values()],
            edges=sorted(graph.edges),
            priority=priority,
        )


class TrajectoryRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    video_id: str = Field(..., min_length=1)
    task: str = Field(..., min_length=1)
    steps: List[str] = Field(..., min_length=1)
    triggers: Optional[List[bool]] = None
    timings: Optional[List[float]] = None


class PredictionRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    video_id: str = Field(..., min_length=1)
    timestep: int = Field(..., ge=0)
    trigger: bool = True
    task: Optional[str] = None
    current_step: Optional[str] = None
    future_steps: List[str] = Field(default_factory=list, max_length=MAX_FUTURE_STEPS)
    scores: Optional[dict] = None


class LogRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    type: Literal["rollout", "event", "online", "sample", "report"]


# ============================================================================
# LECTURE BAS NIVEAU
# ============================================================================

def _pydantic_loci(error: ValidationError, prefix: str) -> List[Tuple[str, str]]:
    loci = []
    for err in error.errors():
        field_path = ".".join(str(part) for part in err["loc"])
        loci.append((f"{prefix}:{field_path}" if field_path else prefix, err["msg"]))
    return loci


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IngestionError(f"Lecture impossible de {path}: {e}", [(str(path), "io")]) from e


def _read_jsonl(path, model, error_cls=IngestionError) -> List[Tuple[int, BaseModel]]:
    """Lit un fichier JSON Lines ligne par ligne ; les lignes vides sont ignorées"""
    rows, loci = [], []
    for line_no, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        locus = f"{path}:{line_no}"
        try:
            rows.append((line_no, model.model_validate(json.loads(line))))
        except json.JSONDecodeError as e:
            loci.append((locus, f"JSON invalide: {e.msg}"))
        except ValidationError as e:
            loci.extend(_pydantic_loci(e, locus))

    if loci:
        raise error_cls(f"{len(loci)} erreur(s) dans {path}", loci)
    return rows


# ============================================================================
# GRAPHES
# ============================================================================

def parse_graph_document(text: str, source: str = "<texte>") -> GraphDocument:
    """
    Analyse un document de graphe JSON

    Raises:
        GraphParseError: JSON invalide ou schéma non respecté (loci ligne / champ)
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise GraphParseError(f"JSON invalide dans {source}", [(f"{source}:{e.lineno}", e.msg)]) from e
    try:
        return GraphDocument.model_validate(data)
    except ValidationError as e:
        raise GraphParseError(f"Schéma de graphe invalide dans {source}", _pydantic_loci(e, source)) from e


def load_graph(path, validate: bool = True) -> TaskGraph:
    """
    Charge un graphe de tâche depuis un fichier JSON

    Args:
        path: Chemin du document
        validate: Exige un rapport de validation vide

    Returns:
        TaskGraph: graphe aux identifiants résolus

    Raises:
        GraphParseError: document mal formé, id dupliqué, arête pendante
        UnvalidatedGraphError: violation sémantique (si validate)
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise GraphParseError(f"Lecture impossible de {path}: {e}", [(str(path), "io")]) from e

    graph = parse_graph_document(text, str(path)).to_graph()
    if validate:
        report = validate_graph(graph)
        if report:
            raise UnvalidatedGraphError(report)
    return graph


def graph_paths(paths) -> List[Path]:
    """Développe les dossiers en leurs fichiers *.json (ordre trié)"""
    result = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            result.extend(sorted(p.glob("*.json")))
        else:
            result.append(p)
    return result


def load_graphs(paths, validate: bool = True) -> Dict[str, TaskGraph]:
    """Charge plusieurs graphes, indexés par nom de tâche (noms uniques)"""
    graphs = {}
    for path in graph_paths(paths):
        graph = load_graph(path, validate)
        if graph.task in graphs:
            raise GraphParseError(f"Tâche {graph.task!r} définie deux fois", [(str(path), "task")])
        graphs[graph.task] = graph
    return graphs


# ============================================================================
# TRAJECTOIRES ET PRÉDICTIONS
# ============================================================================

def load_trajectories(path, graphs: Dict[str, TaskGraph]) -> List[Trajectory]:
    """
    Charge les trajectoires annotées et résout les libellés en NodeIds

    Raises:
        IngestionError: tâche inconnue, libellé non résolu, vidéo dupliquée
    """
    trajectories, loci = [], []
    seen = set()
    for line_no, record in _read_jsonl(path, TrajectoryRecord):
        locus = f"{path}:{line_no}"
        if record.video_id in seen:
            loci.append((locus, f"vidéo dupliquée {record.video_id}"))
            continue
        seen.add(record.video_id)

        graph = graphs.get(record.task)
        if graph is None:
            loci.append((locus, f"tâche inconnue {record.task!r}"))
            continue
        steps, unresolved = resolve_labels(graph, record.steps)
        if unresolved:
            loci.extend((f"{locus}:{record.video_id}", f"étape non résolue {label!r}") for label in unresolved)
            continue
        trajectories.append(Trajectory(
            video_id=record.video_id, task=record.task, steps=tuple(steps),
            triggers=tuple(record.triggers) if record.triggers is not None else None,
            timings=tuple(record.timings) if record.timings is not None else None,
        ))

    if loci:
        raise IngestionError(f"Trajectoires invalides dans {path}", loci)
    logger.info("%d trajectoire(s) chargée(s) depuis %s", len(trajectories), path)
    return trajectories


def load_predictions(path) -> Dict[str, Dict[int, StepPrediction]]:
    """
    Charge les prédictions par vidéo et par pas de temps

    Raises:
        IngestionError: pas de temps non strictement croissants pour une vidéo
    """
    rows = _read_jsonl(path, PredictionRecord)
    if not rows:
        return {}

    frame = pd.DataFrame([{"line": n, "video_id": r.video_id, "timestep": r.timestep} for n, r in rows])
    increasing = frame.groupby("video_id", sort=True)["timestep"].apply(
        lambda s: bool((s.diff().dropna() > 0).all())
    )
    bad = increasing[~increasing].index.tolist()
    if bad:
        raise IngestionError(
            f"Pas de temps non strictement croissants dans {path}",
            [(video, "timestep") for video in bad],
        )

    predictions: Dict[str, Dict[int, StepPrediction]] = {}
    for _, r in rows:
        predictions.setdefault(r.video_id, {})[r.timestep] = StepPrediction(
            timestep=r.timestep, trigger=r.trigger, current_step=r.current_step,
            future_steps=tuple(r.future_steps),
        )
    return predictions


# ============================================================================
# JOURNAUX
# ============================================================================

def load_logs(path) -> List[dict]:
    """Charge un fichier de journaux (rollout, événements, échantillons) en enregistrements"""
    return [record.model_dump() for _, record in _read_jsonl(path, LogRecord)]


def rollout_logs_from_records(records: List[dict]) -> List[RolloutLog]:
    """Reconstruit les RolloutLog (en-tête + événements) pour le contrôle de rejeu"""
    logs, header, events = [], None, []

    def flush():
        if header is not None:
            logs.append(RolloutLog(
                video_id=header["video_id"], task=header["task"], policy=header["policy"],
                events=tuple(events), final_executed=tuple(header["final_executed"]),
                complete=header["complete"], b=header["b"], h=header["h"],
                stalled=header["stalled"], safeguard_uses=header["safeguard_uses"],
            ))

    for record in records:
        if record["type"] == "rollout":
            flush()
            header, events = record, []
        elif record["type"] == "event":
            if header is None:
                raise IngestionError("Événement sans en-tête de rollout", [("event", str(record.get("timestep")))])
            events.append(RolloutEvent(
                timestep=record["timestep"], agent=record["agent"], action=record["action"],
                node=record["node"], reason=record["reason"], thread=record["thread"],
                safeguard=record["safeguard"], h_mix=record["h_mix"],
                candidates=tuple(record["candidates"]),
            ))
    flush()
    return logs
