"""Numerical laboratory for one-dimensional long-range (Dyson) Ising models.

Submodules: ``model`` (couplings, masks, energies), ``gibbs_exact`` (exact
finite-volume measures), ``transfer`` (truncated transfer operator),
``sampler`` (heat-bath Monte Carlo), ``concentration`` (constants and
verification suites) and ``cli``.
"""

__version__ = "0.1.0"
