"""Self-supervised encoder/predictor voltage forecasting for electrochemical cells."""

__version__ = "0.1.0"
