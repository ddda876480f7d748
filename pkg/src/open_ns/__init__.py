"""Off-policy evaluation for non-stationary episodic decision processes."""

__version__ = "0.1.0"
