"""Short-term-memory Q-learning for elastic provisioning: admission control,
horizontal scaling, a simulated VM pool and comparison baselines."""

__version__ = "0.1.0"
