"""Resonance-based low-regularity integrators for dispersive PDEs.

Symbolic layer: exact frequency-polynomial algebra, decorated trees, the
deformed Butcher-Connes-Kreimer Hopf algebra, oscillatory-integral
approximation, and scheme emission.  Numeric layer: 1D periodic spectral
solvers with a convergence-order harness.
"""

__version__ = "0.1.0"
