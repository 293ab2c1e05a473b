"""Context-aware autoencoder anomaly detection for vessel trajectory windows."""

__version__ = "0.1.0"
