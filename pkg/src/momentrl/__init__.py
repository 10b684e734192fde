"""Multi-agent RL moment localization on a normalized timeline.

Three independent agents localize a query-correlated segment in a feature
sequence; a shared fusion network scores each agent's final interval with a
trusted IoU and picks the winner, while the pairwise L1 disagreement between
the agents' outputs flags out-of-scope queries without any dedicated
training for that task.
"""

__version__ = "0.1.0"
