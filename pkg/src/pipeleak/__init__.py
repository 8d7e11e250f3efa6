"""Leak detection in water pipelines from frequency-domain pressure-head measurements."""
