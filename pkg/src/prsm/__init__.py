"""Synthesis and checking of polynomial ranking supermartingales for
nondeterministic probabilistic programs."""

__version__ = "0.1.0"
