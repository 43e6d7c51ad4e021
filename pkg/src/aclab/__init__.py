"""Numerical laboratory for balanced Allen-Cahn energies over normal graphs.

Modules
-------
profiles1d : double well, heteroclinic, auxiliary 1-D profiles and cutoffs
geometry   : warped tori, graph hypersurfaces, curvature, Jacobi spectra
elliptic   : mapped grids, Dirichlet / linearized / full-manifold solvers
energy     : Allen-Cahn energy, broken transitions, expansion residuals
variation  : first and second variations with a finite-difference oracle
minmax     : pseudogradient descent, mountain pass, min-max audits
lab        : configuration, CLI, sweeps and report emission
"""

__version__ = "0.1.0"
