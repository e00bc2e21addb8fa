"""Change-detection bandits for piecewise-stationary rewards.

Environments, CUSUM / Page-Hinkley detectors with their closed-form bounds,
change-detection UCB policies with passive baselines, and a seeded
Monte-Carlo regret harness.
"""
from .baselines import *  # noqa: F401,F403
from .bench import *  # noqa: F401,F403
from .bounds import *  # noqa: F401,F403
from .detect import *  # noqa: F401,F403
from .env import *  # noqa: F401,F403
from .factory import *  # noqa: F401,F403
from .fit import *  # noqa: F401,F403
from .policy import *  # noqa: F401,F403

__version__ = "0.1.0"
