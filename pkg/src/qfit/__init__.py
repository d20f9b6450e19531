"""Simulated quantum estimators for least-squares fitting."""
