"""Currents, differential forms and scaled flat norms, with a FlatGAN trainer."""

__version__ = "0.1.0"
