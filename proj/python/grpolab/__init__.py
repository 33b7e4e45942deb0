"""Tabular GRPO laboratory: calibrated synthetic policy, reward spectrum,
clipping-bias estimators, and strategy-flow analysis."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
