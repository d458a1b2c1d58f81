"""Offline figure generation from fedswitch metric files."""

__version__ = "0.1.0"

from plotkit.figure import FigureSpec, RenderReport, load_spec
from plotkit.render import render

__all__ = ["FigureSpec", "RenderReport", "load_spec", "render", "__version__"]
