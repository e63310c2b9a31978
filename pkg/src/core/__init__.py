"""Estimation core: exposure structure, fitting kernels, estimators, bootstrap."""
