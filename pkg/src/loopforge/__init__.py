"""loopforge: Monte Carlo checks of loop-soup switching identities on cable graphs."""

__version__ = "0.1.0"
