"""
models/
Pydantic models for run configuration, evaluation and benchmark reports,
plus the array carriers passed between pipeline stages.
"""
