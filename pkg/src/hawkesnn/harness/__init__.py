from .config import StudyConfig
from .data import load_counts_csv, save_counts_csv
from .outputs import (Bands, coarsen, emit_histograms, histograms, lag_diagnostics,
                      predictive_bands, weekly_summary)
from .presets import PRESETS, preset
from .study import StudyError, StudyResult, StudyTable, load_study, run_study

__all__ = ["StudyConfig", "load_counts_csv", "save_counts_csv", "Bands", "coarsen",
           "emit_histograms", "histograms", "lag_diagnostics", "predictive_bands",
           "weekly_summary", "PRESETS", "preset", "StudyError", "StudyResult", "StudyTable",
           "load_study", "run_study"]
