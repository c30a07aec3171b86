"""Vaccination-uptake and media-signal analytics.

Registry-derived monthly signals, correlation tipping points, AR and
cross-correlation diagnostics, and nowcasting models (linear with optional
LASSO / Elastic Net, Gaussian process, random forest).
"""

from .errors import VaxSignalError
from .timeseries import MonthlyTimeSeries, SeriesWindow, YearMonth

__version__ = "0.1.0"

__all__ = ["MonthlyTimeSeries", "SeriesWindow", "VaxSignalError", "YearMonth", "__version__"]
