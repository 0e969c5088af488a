import re
import math


def clean_step_label(value):
    """
    Normalise un libellé d'étape pour la correspondance exacte
    (ex: "  Tie   the BAG " -> "tie the bag")

    Args:
        value: Libellé brut (str, None, nombre...)

    Returns:
        str: Libellé normalisé (casse repliée, espaces compressés), '' si vide
    """
    if value is None:
        return ''

    if isinstance(value, float) and math.isnan(value):
        return ''

    if not isinstance(value, str):
        value = str(value)

    # casefold gère aussi les ligatures et l'allemand
    return re.sub(r'\s+', ' ', value).strip().casefold()


def clean_label_list(values):
    """
    Nettoie une liste de libellés en conservant l'ordre (doublons compris)

    Args:
        values: Liste de libellés, None ou libellé seul

    Returns:
        list: Libellés normalisés, les entrées vides sont retirées
    """
    if values is None:
        return []

    if isinstance(values, str):
        values = [values]

    cleaned = [clean_step_label(v) for v in values]
    return [v for v in cleaned if v]


def safe_int_conversion(value, default=0, minimum=None):
    """
    Convertit une valeur en entier de manière sécurisée

    Args:
        value: La valeur à convertir
        default: Valeur par défaut si la conversion échoue
        minimum: Borne inférieure acceptée (sinon valeur par défaut)

    Returns:
        int: La valeur convertie ou la valeur par défaut
    """
    if value is None or value == '':
        return default

    if isinstance(value, bool):
        return default

    if isinstance(value, int):
        result = value
    elif isinstance(value, float):
        if math.isnan(value) or not value.is_integer():
            return default
        result = int(value)
    else:
        cleaned = str(value).replace(' ', '').strip()
        if not re.fullmatch(r'[+-]?\d+', cleaned):
            return default
        result = int(cleaned)

    if minimum is not None and result < minimum:
        return default

    return result


def safe_flag_conversion(value, default=False):
    """Convertit "1"/"true"/"oui"/"0"/"false"/"non" en booléen"""
    if value is None or value == '':
        return default
    if isinstance(value, bool):
        return value

    cleaned = str(value).strip().lower()
    if cleaned in ['1', 'true', 'vrai', 'oui', 'yes', 'on']:
        return True
    if cleaned in ['0', 'false', 'faux', 'non', 'no', 'off']:
        return False
    return default
