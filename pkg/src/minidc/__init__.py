"""Energy, carbon and cost modelling of mini data centres mixing grid servers and solar Genesis modules."""

__version__ = "0.1.0"
