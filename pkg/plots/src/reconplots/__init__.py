"""Standalone figure scripts for the evaluation pipeline's CSV tables.

Three figure types: per-identity NME boxplots, error distribution curves
(several tables may be overlaid), and ROC curves.  The scripts only render;
every number comes from the tables they are given.
"""

__version__ = "0.1.0"
