"""Planar wheeled-legged locomotion stack: simulator, environment, learner, harness."""

__version__ = "0.1.0"
