"""Inverse pipeline: slopes, bath relaxation, spectra and small estimators."""

from .auxiliary import (DoubleExponentialFit, estimate_dipole, estimate_zbar, fit_double_exponential,
                        naive_t1)
from .bath import BathRelaxationFit, bath_model, fit_bath_relaxation
from .slopes import (SlopeEstimate, SlopeSeries, extract_slope, fit_exponential, rate_constraint,
                     slope_series, zdot_to_rates)
from .spectrum import (FitConvergenceError, FittedTls, OverParameterizedError, PolarizabilityEstimate,
                       SpectrumDataset, SpectrumFit, fit_spectrum, mean_polarizability,
                       polarizability_spectrum)

__all__ = [
    "BathRelaxationFit", "DoubleExponentialFit", "FitConvergenceError", "FittedTls", "OverParameterizedError",
    "PolarizabilityEstimate", "SlopeEstimate", "SlopeSeries", "SpectrumDataset", "SpectrumFit", "bath_model",
    "estimate_dipole", "estimate_zbar", "extract_slope", "fit_bath_relaxation", "fit_double_exponential",
    "fit_exponential", "fit_spectrum", "mean_polarizability", "naive_t1", "polarizability_spectrum",
    "rate_constraint", "slope_series", "zdot_to_rates",
]
