"""Loop-ensemble Monte Carlo for quantum rotators on bi-dimensional graphs.

Samples Gibbs ensembles of periodic Brownian loops attached to lattice
sites, estimates reduced density matrix kernels, and runs the numerical
certification suites for the gauge-decay and symmetry-breaking
experiments.
"""

__version__ = "0.1.0"
