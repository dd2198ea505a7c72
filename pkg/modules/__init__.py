"""
Markov Certification Modules
============================

Certificates, convergence envelopes and simulate-and-compare checks for
finite-state stochastic kernels and generator semigroups.
"""

__version__ = "1.0.0"
__author__ = "Markov Certification Team"
