"""tsfops: a self-contained MLOps engine for codeless time-series forecasting.

Stages: dataset ingestion/validation -> ETL -> training (with optional
hyperparameter search) -> backtesting evaluation, all tracked in a
file-backed experiment store and exposed through a CLI and an
authenticated HTTP service.
"""

__version__ = "0.1.0"
