"""Deterministic discrete-event simulation of replica groups and clients."""
