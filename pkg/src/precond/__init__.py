"""Mining action preconditions from demonstration trajectories."""

__version__ = "0.1.0"
