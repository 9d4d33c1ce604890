"""Dynamic virtual network embedding with a GCN actor-critic agent."""

__version__ = "0.1.0"
