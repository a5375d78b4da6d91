from .render import KINDS, ContainmentError, FigureSpec, SchemaMismatch, render

__all__ = ["KINDS", "ContainmentError", "FigureSpec", "SchemaMismatch", "render"]
__version__ = "0.1.0"
