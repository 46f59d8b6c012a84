"""Simulation harness, lemma verification and CSV exchange."""
from .config import SimConfig, format_config, load_config, parse_config_text
from .io import CSVFormatError, ingest_csv, read_fit, write_dataset_csv, write_fit
from .lemmas import LemmaRow, lemma_report_csv, verify_lemmas
from .simulation import (MetricsReport, Truth, generate_truth, metrics_csv, reps_csv,
                         run_replication, run_simulation, simulate_dataset, tune_delta_c)

__all__ = [
    "SimConfig", "format_config", "load_config", "parse_config_text",
    "CSVFormatError", "ingest_csv", "read_fit", "write_dataset_csv", "write_fit",
    "LemmaRow", "lemma_report_csv", "verify_lemmas",
    "MetricsReport", "Truth", "generate_truth", "metrics_csv", "reps_csv", "run_replication",
    "run_simulation", "simulate_dataset", "tune_delta_c",
]
