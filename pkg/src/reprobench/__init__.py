"""Preprocessing-robustness benchmark for recommender-system datasets."""

__version__ = "0.1.0"
