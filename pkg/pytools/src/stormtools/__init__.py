"""Companion tooling for the storm tracking core: dataset ingestion and figures.

The package talks to the tracking core only through its file formats
(portable grid directories, best-track CSVs, report tables); it never
imports it.
"""

from .era5 import GridMismatchError, IngestJob, MissingVariableError, convert_era5, run_jobs
from .figures import plot_report
from .gridio import PortableGrids, read_grid, write_grid
from .ibtracs import SchemaError, convert_ibtracs

__version__ = "0.1.0"

__all__ = [
    "GridMismatchError",
    "IngestJob",
    "MissingVariableError",
    "PortableGrids",
    "SchemaError",
    "convert_era5",
    "convert_ibtracs",
    "plot_report",
    "read_grid",
    "run_jobs",
    "write_grid",
    "__version__",
]
