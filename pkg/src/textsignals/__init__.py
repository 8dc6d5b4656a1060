"""Datasets pairing time-bucketed document feeds with daily time series."""
from .anomaly import AnomalyParams, detect_anomalies, positive_rate, zscore_series
from .core import (
    Document,
    Feed,
    RowTable,
    Signal,
    SignalError,
    TimeSeries,
    align,
    export_plot,
    idxmax,
    make_time_series,
    slice_signal,
    to_row_table,
    to_tick,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyParams", "Document", "Feed", "RowTable", "Signal", "SignalError", "TimeSeries",
    "align", "detect_anomalies", "export_plot", "idxmax", "make_time_series", "positive_rate",
    "slice_signal", "to_row_table", "to_tick", "zscore_series",
]
