"""Stock direction forecasting with fuzzy-membership support vector machines."""

__version__ = "0.1.0"
