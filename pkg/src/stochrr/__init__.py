"""Stochastic radiation reaction of a scalar electron.

Relativistic Brownian paths driven by Klein-Gordon drift fields, classical
LAD and Landau-Lifshitz integrators, and the quantum correction factor q(chi).
"""
__version__ = "0.1.0"
