"""Prompt template files for the pipeline stages."""
