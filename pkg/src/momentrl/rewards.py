"""Per-boundary reward shaping for the localization agents.

Each step, each boundary earns its own reward and the step reward is their
sum. Holding earns the constant ``rho``. A move is judged on the *attempted*
boundary before any clamping: an inadmissible attempt earns the shaped
penalty ``beta``; otherwise the sign of the base term follows whether the
attempt reduced the distance to the target boundary. The shaping term
``x + d_now - theta * d_next`` rewards progress and discounts the remaining
distance.

The distance-reduction orientation of the two signed branches is the
default; ``reward_branch_as_printed`` flips it for comparison runs.
"""

from __future__ import annotations

from momentrl.config import RewardConfig
from momentrl.timeline import Boundary, boundary_distance, is_valid

__all__ = ["RewardConfig", "distance_shaping", "boundary_reward", "step_reward"]


def distance_shaping(x: float, d_now: float, d_next: float, theta: float) -> float:
    return x + d_now - theta * d_next


def boundary_reward(
    moved: bool,
    prev_boundary: float,
    next_boundary: float,
    gt_boundary: float,
    other_boundary: float,
    which: Boundary,
    cfg: RewardConfig,
) -> float:
    """Reward for one boundary's action at one step.

    ``next_boundary`` is the attempted position before clamping; ``moved``
    is False for a hold.
    """
    if not moved:
        return cfg.rho
    d_now = boundary_distance(prev_boundary, gt_boundary)
    d_next = boundary_distance(next_boundary, gt_boundary)
    if not is_valid(next_boundary, which, other_boundary):
        return distance_shaping(cfg.beta, d_now, d_next, cfg.theta)
    if cfg.reward_branch_as_printed:
        positive = d_next > d_now
    else:
        positive = d_next < d_now
    base = (1.0 - d_next) if positive else (-1.0 - d_next)
    return distance_shaping(base, d_now, d_next, cfg.theta)


def step_reward(start_reward: float, end_reward: float) -> float:
    return start_reward + end_reward
