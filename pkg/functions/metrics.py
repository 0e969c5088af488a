"""
Module des métriques d'action proactive
SS (pas économisés), E (entropie de mélange), ER (entropie des fils robot),
PA (actions parallèles), décomposition des Wait, ED et hallucinations.

Les fonctions acceptent indifféremment des objets (RolloutLog, DecisionSample)
ou les enregistrements JSON correspondants, ce qui permet de recalculer un
rapport identique depuis un fichier de journaux.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional

import nltk
import pandas as pd
from scipy.stats import entropy

from functions.clean import clean_label_list

logger = logging.getLogger(__name__)

DECISION_COLUMNS = ["video_id", "timestep", "action", "reason", "node", "thread", "h_prev_thread", "h_mix"]


# ============================================================================
# NORMALISATION DES ENTRÉES
# ============================================================================

def _records(items) -> List[dict]:
    records = []
    for item in items:
        if isinstance(item, dict):
            records.append(item)
        elif hasattr(item, "to_records"):
            records.extend(item.to_records())
        else:
            records.append(item.to_record())
    return records


def _headers(items) -> List[dict]:
    return [r for r in _records(items) if r.get("type") == "rollout"]


def _samples(items) -> List[dict]:
    return [r for r in _records(items) if r.get("type") == "sample"]


def decision_frame(items) -> pd.DataFrame:
    """
    Une ligne par décision robot (journaux de rollout ou échantillons en ligne)

    Pour les journaux, le fil de la dernière action humaine (h_prev) est
    reconstitué en parcourant les événements dans l'ordre.
    """
    rows = []
    video_id = None
    h_prev_thread = None
    for record in _records(items):
        kind = record.get("type")
        if kind == "rollout":
            video_id = record["video_id"]
            h_prev_thread = None
        elif kind == "event":
            if record["agent"] == "human":
                if record["action"] == "execute":
                    h_prev_thread = record["thread"]
                continue
            rows.append({
                "video_id": video_id, "timestep": record["timestep"], "action": record["action"],
                "reason": record["reason"], "node": record["node"], "thread": record["thread"],
                "h_prev_thread": h_prev_thread, "h_mix": record["h_mix"],
            })
        elif kind == "sample":
            rows.append({
                "video_id": record["video_id"], "timestep": record["timestep"], "action": record["action"],
                "reason": record["reason"], "node": record["node"], "thread": record["action_thread"],
                "h_prev_thread": record["h_prev_thread"], "h_mix": record["h_mix"],
            })

    frame = pd.DataFrame(rows, columns=DECISION_COLUMNS)
    frame["effective"] = frame["action"] == "execute"
    frame["parallel"] = (
        frame["effective"]
        & frame["h_prev_thread"].notna()
        & (frame["thread"] != frame["h_prev_thread"])
    )
    return frame


def _mean(values: Iterable[float]) -> Optional[float]:
    # fsum : résultat indépendant de l'ordre des vidéos
    values = list(values)
    if not values:
        return None
    return math.fsum(values) / len(values)


# ============================================================================
# MÉTRIQUES
# ============================================================================

def saved_steps_full(logs) -> float:
    """SS = moyenne de B_i − H_i sur les vidéos"""
    headers = _headers(logs)
    if not headers:
        raise ValueError("Aucun journal de rollout")
    return _mean(h["b"] - h["h"] for h in headers)


def saved_steps_online(samples) -> float:
    """SS en ligne = moyenne des S_j"""
    records = _samples(samples)
    if not records:
        raise ValueError("Aucun échantillon de décision")
    return _mean(1.0 if r["correct"] else 0.0 for r in records)


def _per_video(frame: pd.DataFrame, fn) -> Dict[str, float]:
    effective = frame[frame["effective"]]
    return {video: fn(group) for video, group in effective.groupby("video_id", sort=True)}


def mixing_entropy_metric(items) -> Optional[float]:
    """
    E : moyenne par vidéo des H_mix réalisés aux actions effectives, puis moyenne des vidéos

    Returns:
        float ou None si le robot n'a jamais agi
    """
    per_video = _per_video(decision_frame(items), lambda g: _mean(g["h_mix"].astype(float)))
    return _mean(per_video.values())


def _thread_entropy(group: pd.DataFrame) -> float:
    counts = group["thread"].astype(int).value_counts().sort_index().to_numpy()
    return float(entropy(counts, base=2))


def robot_thread_entropy(items) -> Optional[float]:
    """ER : entropie de Shannon (base 2) de la répartition des actions robot sur les fils"""
    per_video = _per_video(decision_frame(items), _thread_entropy)
    return _mean(per_video.values())


def parallel_action_rate(items) -> Optional[float]:
    """PA = 100 · P / N^R, agrégé sur toutes les vidéos (None si N^R = 0)"""
    frame = decision_frame(items)
    n_effective = int(frame["effective"].sum())
    if n_effective == 0:
        return None
    return 100.0 * int(frame["parallel"].sum()) / n_effective


def wait_decomposition(items) -> Dict[str, float]:
    """
    Fractions sur l'ensemble des décisions robot : model_wait, forced_wait,
    parallel, non_parallel (somme 1 dès qu'il y a au moins une décision)
    """
    frame = decision_frame(items)
    total = len(frame)
    if total == 0:
        return {"model_wait": 0.0, "forced_wait": 0.0, "parallel": 0.0, "non_parallel": 0.0}

    waits = frame[~frame["effective"]]
    counts = {
        "model_wait": int((waits["reason"] == "empty_candidates").sum()),
        "forced_wait": int((waits["reason"] == "forced_wait").sum()),
        "parallel": int(frame["parallel"].sum()),
        "non_parallel": int((frame["effective"] & ~frame["parallel"]).sum()),
    }
    return {key: value / total for key, value in counts.items()}


def edit_distance(pred: Iterable[str], truth: Iterable[str]) -> int:
    """Distance de Levenshtein sur des étapes entières (libellés normalisés)"""
    return int(nltk.edit_distance(clean_label_list(pred), clean_label_list(truth)))


def hallucination_counts(samples) -> Dict[str, float]:
    """
    Hallucinations par type :
    - trigger : intervention prédite alors que la vérité terrain n'en demande pas
    - step : étape courante non vide hors vocabulaire
    - future : liste future vide ou contenant un libellé hors vocabulaire
    """
    records = _samples(samples)
    counts = {"trigger": 0, "step": 0, "future": 0}
    for r in records:
        if r["predicted_trigger"] and not r["true_trigger"]:
            counts["trigger"] += 1
        if not r["current_in_vocabulary"]:
            counts["step"] += 1
        if not r["future_labels"] or r["unresolved"]:
            counts["future"] += 1

    n = len(records)
    rates = {f"{key}_rate": (value / n if n else 0.0) for key, value in counts.items()}
    return {**counts, **rates}


def mean_edit_distance(samples) -> Optional[float]:
    """ED moyen entre les étapes futures prédites et les (≤ 5) suivantes annotées"""
    records = _samples(samples)
    return _mean(edit_distance(r["future_labels"], r["truth_future_labels"]) for r in records)


# ============================================================================
# RAPPORT
# ============================================================================

@dataclass
class MetricsReport:
    mode: str
    ss: Optional[float]
    e: Optional[float]
    er: Optional[float]
    pa: Optional[float]
    waits: Dict[str, float]
    ed: Optional[float] = None
    hallucinations: Dict[str, float] = field(default_factory=dict)
    n: Dict[str, int] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"type": "report", **asdict(self)}


def video_frame(logs) -> pd.DataFrame:
    """Tableau par vidéo : B_i, H_i, S_i, actions effectives, E_i, ER_i, blocages"""
    headers = _headers(logs)
    frame = decision_frame(logs)
    effective = frame[frame["effective"]]
    rows = []
    for header in headers:
        actions = effective[effective["video_id"] == header["video_id"]]
        rows.append({
            "video_id": header["video_id"],
            "task": header["task"],
            "policy": header["policy"],
            "b": header["b"],
            "h": header["h"],
            "s": header["b"] - header["h"],
            "effective": len(actions),
            "parallel": int(actions["parallel"].sum()),
            "e": _mean(actions["h_mix"].astype(float)) if len(actions) else None,
            "er": _thread_entropy(actions) if len(actions) else None,
            "complete": header["complete"],
            "stalled": header["stalled"],
            "safeguard_uses": header["safeguard_uses"],
        })
    return pd.DataFrame(rows)


def build_report(logs=None, samples=None) -> MetricsReport:
    """
    Agrège un rapport complet, en mode "full" (journaux) ou "online" (échantillons)
    """
    if logs:
        items = list(logs)
        headers = _headers(items)
        frame = decision_frame(items)
        videos_acting = frame.loc[frame["effective"], "video_id"].nunique()
        report = MetricsReport(
            mode="full",
            ss=saved_steps_full(items),
            e=mixing_entropy_metric(items),
            er=robot_thread_entropy(items),
            pa=parallel_action_rate(items),
            waits=wait_decomposition(items),
            n={
                "videos": len(headers),
                "decisions": len(frame),
                "effective": int(frame["effective"].sum()),
                "videos_without_action": len(headers) - videos_acting,
                "stalled": sum(1 for h in headers if h["stalled"]),
                "safeguard_uses": sum(h["safeguard_uses"] for h in headers),
            },
        )
    elif samples:
        items = list(samples)
        frame = decision_frame(items)
        online_headers = [r for r in _records(items) if r.get("type") == "online"]
        report = MetricsReport(
            mode="online",
            ss=saved_steps_online(items),
            e=mixing_entropy_metric(items),
            er=robot_thread_entropy(items),
            pa=parallel_action_rate(items),
            waits=wait_decomposition(items),
            ed=mean_edit_distance(items),
            hallucinations=hallucination_counts(items),
            n={
                "videos": len(online_headers) or int(frame["video_id"].nunique()),
                "samples": len(frame),
                "effective": int(frame["effective"].sum()),
                "skipped": sum(r["skipped"] for r in online_headers),
            },
        )
    else:
        raise ValueError("Ni journaux ni échantillons à évaluer")

    logger.info("Rapport %s: SS=%s E=%s ER=%s PA=%s", report.mode, report.ss, report.e, report.er, report.pa)
    return report
