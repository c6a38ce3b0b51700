"""Weighted Steklov p-Laplacian eigenvalues, bifurcation branches and boundary rearrangements."""
__version__ = "0.1.0"
