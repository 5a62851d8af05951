"""Numerical laboratory for multiple points of the Brownian sheet.

Modules: :mod:`~sheetlab.gaussian` (Cholesky sampling and conditioning),
:mod:`~sheetlab.sheet` (exact and white-noise grid samplers),
:mod:`~sheetlab.pinning` (corner interpolation), :mod:`~sheetlab.girsanov`
(decoupling drift), :mod:`~sheetlab.capacity` (Riesz energies and
capacities), :mod:`~sheetlab.multipoints` (near-multiple-point search and
experiments) and :mod:`~sheetlab.cli` (batch runner).
"""

__version__ = "0.1.0"
