"""Random walks in partially random environments: annealed kernels, lace
expansion coefficients, Green functions and simulation."""
__version__ = "0.1.0"
