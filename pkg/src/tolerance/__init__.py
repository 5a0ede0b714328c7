"""Optimal recovery and replication control for intrusion-tolerant systems."""
from __future__ import annotations

__version__ = "0.1.0"
