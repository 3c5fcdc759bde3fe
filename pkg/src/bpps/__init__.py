"""Portfolio construction from Bayesian predictive synthesis of return forecasters."""

__version__ = "0.1.0"
