"""Numerical study of sign-changing Lane-Emden steady states via the heat flow.

Subpackages:

- ``geometry``: symmetry groups, domains, polar / masked cartesian grids
- ``radial``:   1D radial Lane-Emden solver and explicit test profiles
- ``energy``:   energy functional, Nehari projection, sharp constants
- ``flow``:     IMEX time stepping, trajectory classification, threshold bisection
- ``nodal``:    nodal domain extraction and geometric predicates
- ``spectrum``: linearized operator, Morse index, half-domain eigenvalue
- ``cli``:      command line front end (``lef`` entry point)
"""

__version__ = "0.1.0"
