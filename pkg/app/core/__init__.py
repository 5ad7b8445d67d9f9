"""Core application utilities (config, logging, etc.)."""
