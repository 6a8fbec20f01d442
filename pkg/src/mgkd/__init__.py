"""Two-phase teacher-student distillation for pre-service risk models."""

__version__ = "0.1.0"
