"""Chamber-scale vision-radio digital twin and its orchestration service."""

__version__ = "0.1.0"
