"""Log-log convergence figures from solver sweep CSV files."""

from .plot import FigureSpec, FiguresError, load_spec, render

__all__ = ["FigureSpec", "FiguresError", "load_spec", "render"]
