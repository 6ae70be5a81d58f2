"""Offline figure rendering for formation-control CSV artifacts."""

from .render import PLOT_KINDS, SchemaError, render

__all__ = ["PLOT_KINDS", "SchemaError", "render"]
