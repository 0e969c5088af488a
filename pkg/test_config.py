"""
Tests de la configuration par environnement et des utilitaires de nettoyage
"""

import logging

import pytest

import config_simulation
from functions.clean import clean_label_list, clean_step_label, safe_flag_conversion, safe_int_conversion


@pytest.mark.parametrize("raw, expected", [(None, 1), ("", 1), ("4", 4), (" 8 ", 8), ("0", 1), ("abc", 1)])
def test_jobs_from_env(monkeypatch, raw, expected):
    monkeypatch.delenv("TASKGRAPH_JOBS", raising=False)
    if raw is not None:
        monkeypatch.setenv("TASKGRAPH_JOBS", raw)
    assert config_simulation.get_jobs() == expected


def test_defaults(monkeypatch):
    for name in ("TASKGRAPH_STALL_ROUNDS", "TASKGRAPH_SAFEGUARD", "TASKGRAPH_OUTPUT_DIR", "TASKGRAPH_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    assert config_simulation.get_stall_rounds() == 2
    assert config_simulation.get_safeguard() is True
    assert config_simulation.get_output_dir() == "resultats"
    assert config_simulation.get_log_level() == "WARNING"


def test_overrides(monkeypatch):
    monkeypatch.setenv("TASKGRAPH_SAFEGUARD", "non")
    monkeypatch.setenv("TASKGRAPH_LOG_LEVEL", "debug")
    monkeypatch.setenv("TASKGRAPH_STALL_ROUNDS", "5")
    assert config_simulation.get_safeguard() is False
    assert config_simulation.get_log_level() == "DEBUG"
    assert config_simulation.get_stall_rounds() == 5


def test_invalid_log_level(monkeypatch):
    monkeypatch.setenv("TASKGRAPH_LOG_LEVEL", "bavard")
    assert config_simulation.get_log_level() == "WARNING"


def test_configure_logging_installs_one_handler():
    root = logging.getLogger()
    first = config_simulation.configure_logging("INFO")
    second = config_simulation.configure_logging("DEBUG")
    try:
        assert first not in root.handlers and second in root.handlers
        assert root.level == logging.DEBUG
    finally:
        root.removeHandler(second)
        root.setLevel(logging.WARNING)


def test_clean_helpers():
    assert clean_step_label("  Tie   the BAG ") == "tie the bag"
    assert clean_step_label(None) == ""
    assert clean_label_list(["A", " ", None, "b  c"]) == ["a", "b c"]
    assert clean_label_list("Seul") == ["seul"]
    assert safe_int_conversion("1 000") == 1000
    assert safe_int_conversion(2.5, default=-1) == -1
    assert safe_int_conversion(True, default=7) == 7
    assert safe_flag_conversion("Oui") is True
    assert safe_flag_conversion("peut-être", default=False) is False
