# Vote-Share Toolkit — Study Pipeline Package

__version__ = "1.0.0"
