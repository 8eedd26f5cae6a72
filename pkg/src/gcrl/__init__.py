"""Goal-conditioned reinforcement learning from demonstrations.

Library and experiment CLI covering hindsight relabeling, goal-conditioned
behavioral cloning, demonstration relabeling and goal-conditioned
adversarial imitation (including state-only demonstrations) on built-in
2D environments with scripted experts.
"""

__version__ = "0.1.0"
