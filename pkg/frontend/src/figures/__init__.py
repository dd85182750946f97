"""Deterministic vector figures for irrigation-control CSV artifacts."""

from .render import FigureSpec, KINDS, SchemaError, render

__all__ = ["FigureSpec", "KINDS", "SchemaError", "render"]
