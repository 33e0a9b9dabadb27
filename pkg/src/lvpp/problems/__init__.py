"""Discrete saddle problems for the reproduced experiments."""
