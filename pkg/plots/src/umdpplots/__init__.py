from .heatmap import EmptySlice, PlotSpec, SchemaMismatch, heatmap

__all__ = ["EmptySlice", "PlotSpec", "SchemaMismatch", "heatmap"]
