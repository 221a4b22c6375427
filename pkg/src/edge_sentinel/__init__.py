"""
Edge Sentinel
Fault-tolerant edge scheduling driven by a self-supervised surrogate model
"""

__version__ = "0.1.0"
