"""Gaussian probability-path flow matching for forecasting dynamical systems in latent space."""

__version__ = "0.1.0"
