"""Geomorphic-prior landslide susceptibility modelling."""
