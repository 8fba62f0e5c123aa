"""Multi-agent dynamic spectrum access with reservoir-computing deep Q-learning."""

__version__ = "0.1.0"
