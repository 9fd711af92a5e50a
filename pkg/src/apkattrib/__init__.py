"""Android software attribution signals: extraction, graph, and reports."""

__version__ = "0.1.0"
DATASET_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1
