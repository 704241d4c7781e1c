"""Heavy-light quantum scattering toolkit: asymptotic states in the small mass-ratio limit,
wave operators, decoherence of the heavy particle and numerical checks of the analytic bounds."""

__version__ = "0.1.0"
