"""Suicide-risk severity assessment on C-SSRS annotated Reddit users."""

__version__ = "0.1.0"
