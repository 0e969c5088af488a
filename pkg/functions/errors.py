"""
Hiérarchie d'exceptions du projet.
Chaque erreur porte des "loci" (nœud, arête, ligne, champ) pour que la CLI
puisse produire des enregistrements d'erreur lisibles par machine.
"""

from typing import List, Tuple


Locus = Tuple[str, str]


class TaskGraphError(Exception):
    """Erreur de base du projet"""

    kind = "internal"

    def __init__(self, message: str, loci: List[Locus] = None):
        super().__init__(message)
        self.message = message
        self.loci = list(loci or [])

    def to_record(self) -> dict:
        return {
            "error": self.kind,
            "message": self.message,
            "loci": [{"locus": locus, "detail": detail} for locus, detail in self.loci],
        }


class GraphParseError(TaskGraphError):
    """Document de graphe mal formé (schéma, identifiant dupliqué ou non résolu)"""

    kind = "parse"


class UnknownNodeError(TaskGraphError, KeyError):
    """Identifiant de nœud absent du graphe"""

    kind = "unknown_node"

    def __init__(self, node_id):
        super().__init__(f"Nœud inconnu: {node_id!r}", [(str(node_id), "absent du graphe")])
        self.node_id = node_id

    def __str__(self):
        return self.message


class IllegalActionError(TaskGraphError):
    """Action refusée par apply_step (porte non satisfaite, déjà exécutée...)"""

    kind = "illegal_action"


class UnvalidatedGraphError(TaskGraphError):
    """Graphe dont le rapport de validation n'est pas vide"""

    kind = "validation"

    def __init__(self, report):
        loci = [(v.locus(), v.rule) for v in report]
        super().__init__(f"Graphe invalide ({len(report)} violation(s))", loci)
        self.report = report


class IngestionError(TaskGraphError):
    """Fichier de trajectoires / prédictions / journaux incohérent"""

    kind = "ingestion"


class InvariantViolation(TaskGraphError):
    """Invariant interne violé (rejeu d'un journal, cohérence d'état)"""

    kind = "invariant"
