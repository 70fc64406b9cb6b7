"""Hyperbolic fillings of finite metric measure spaces.

Subpackages / modules:

* ``seq_norms``    -- weak-type norms for finite sequences
* ``metric_space`` -- finite metric measure spaces, generators, regularity
* ``filling``      -- leveled ball graphs over separated nets
* ``transfer``     -- extension / gradient / trace / maximal operators
* ``sobolev``      -- discrete first-order energies and Poincare checks
* ``euclidean``    -- half-space harmonic-extension analogues on grids
* ``experiments``  -- property-test experiment suites and reports
* ``cli``          -- command-line entry point
"""

__version__ = "0.1.0"
