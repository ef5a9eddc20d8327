"""Rank-size analysis toolkit.

Fits doubly decreasing power laws to ranked panel data, computes rank
correlation statistics (Kendall tau, Spearman rho, Pearson), segments
two-regime scatter structure, and provides a preferential-attachment urn
simulator for generating synthetic rank-size data.
"""

__version__ = "0.1.0"
