"""Seeded evolutionary optimization of physics-based models with search explainability tools."""

__version__ = "0.1.0"
