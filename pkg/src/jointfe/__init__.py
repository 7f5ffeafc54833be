"""Joint feature-engineering and hyperparameter search for tabular data."""

from .engine import RunConfig, RunReport, run
from .feops import OperationSpec, fit_pipeline, apply_pipeline
from .proposer import Proposal, ScriptedBackend, LLMBackend
from .scheduler import simulate_neutral
from .tabular import DataTable, Schema, SplitSpec, load_csv, load_schema

__version__ = "0.1.0"
