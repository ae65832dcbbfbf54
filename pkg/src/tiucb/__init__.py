"""Rested-bandit simulation: TI-UCB, baselines, environments and greedy-oracle regret."""

__version__ = "0.1.0"
