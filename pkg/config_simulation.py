"""
Configuration de la simulation selon l'environnement
Chaque valeur se lit dans une variable d'environnement avec une valeur par défaut ;
la ligne de commande peut ensuite la surcharger.
"""
import logging
import os
import sys

from functions.clean import safe_flag_conversion, safe_int_conversion
from functions.simulator import DEFAULT_STALL_ROUNDS, MAX_FUTURE_STEPS

logger = logging.getLogger(__name__)

DEFAULT_JOBS = 1
DEFAULT_LOG_LEVEL = 'WARNING'
DEFAULT_OUTPUT_DIR = 'resultats'


def _int_from_env(name, default):
    raw = os.environ.get(name)
    value = safe_int_conversion(raw, default=None, minimum=1)
    if value is None:
        if raw not in (None, ''):
            logger.warning("%s=%r invalide, valeur par défaut %s", name, raw, default)
        return default
    return value


def get_jobs():
    """Nombre de processus pour les commandes par lot"""
    return _int_from_env('TASKGRAPH_JOBS', DEFAULT_JOBS)


def get_stall_rounds():
    """Tours consécutifs sans action avant l'arrêt d'un rollout"""
    return _int_from_env('TASKGRAPH_STALL_ROUNDS', DEFAULT_STALL_ROUNDS)


def get_safeguard():
    return safe_flag_conversion(os.environ.get('TASKGRAPH_SAFEGUARD'), default=True)


def get_output_dir():
    return os.environ.get('TASKGRAPH_OUTPUT_DIR') or DEFAULT_OUTPUT_DIR


def get_log_level():
    level = (os.environ.get('TASKGRAPH_LOG_LEVEL') or DEFAULT_LOG_LEVEL).upper()
    # logging.getLevelNamesMapping n'existe qu'à partir de Python 3.11
    names = logging.getLevelNamesMapping() if hasattr(logging, 'getLevelNamesMapping') else logging._nameToLevel
    if level not in names:
        logger.warning("TASKGRAPH_LOG_LEVEL=%r invalide, niveau %s", level, DEFAULT_LOG_LEVEL)
        return DEFAULT_LOG_LEVEL
    return level


def configure_logging(level=None):
    """Installe un unique handler stderr sur le logger racine"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_taskgraph', False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    handler._taskgraph = True
    root.addHandler(handler)
    root.setLevel(level or get_log_level())
    return handler


if __name__ == "__main__":
    print("🔍 Configuration de la simulation...")
    print(f"⚙️  Processus: {get_jobs()}")
    print(f"⚙️  Tours avant blocage: {get_stall_rounds()}")
    print(f"⚙️  Garde-fou: {'activé' if get_safeguard() else 'désactivé'}")
    print(f"⚙️  Horizon des prédictions: {MAX_FUTURE_STEPS} étapes")
    print(f"📁 Dossier de sortie: {get_output_dir()}")
    print(f"📝 Niveau de log: {get_log_level()}")
