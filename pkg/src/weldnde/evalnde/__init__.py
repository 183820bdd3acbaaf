"""NDE reliability statistics and the cross-validated experiment harness."""
from .experiment import (ExperimentConfig, ExperimentResult, MetricsRow, pod_csv, rows_from_csv,
                         rows_to_csv, rows_to_json, run_experiment, worst_row)
from .matching import FalseCall, HitMissRecord, match_indications
from .pod import (DegenerateDataError, FitError, NotDemonstrableError, PodCurve, a90_95, fit_pod)
from .rates import (EmptyMetricError, FalseCallRates, InconsistencyError, SizingError,
                    false_call_rates, kfold_split, sizing_error, weld_length_mm)

__all__ = [
    "DegenerateDataError", "EmptyMetricError", "ExperimentConfig", "ExperimentResult", "FalseCall",
    "FalseCallRates", "FitError", "HitMissRecord", "InconsistencyError", "MetricsRow",
    "NotDemonstrableError", "PodCurve", "SizingError", "a90_95", "false_call_rates", "fit_pod",
    "kfold_split", "match_indications", "pod_csv", "rows_from_csv", "rows_to_csv", "rows_to_json",
    "run_experiment", "sizing_error", "weld_length_mm", "worst_row",
]
