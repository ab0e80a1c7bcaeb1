"""botsift: botnet TCP-flow features, feature ranking and fast flow classifiers."""

__version__ = "0.1.0"
