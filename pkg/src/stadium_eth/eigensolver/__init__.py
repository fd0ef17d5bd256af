"""Dirichlet eigenpairs of the quarter stadium."""

from .basis import PlaneWaveBasis, make_basis
from .fd import fd_laplacian, fd_solve
from .scaling import (EigenState, SolverSettings, SpectralWindow, boundary_residual,
                      evaluate_state, solve_range, solve_window, weyl_count)
from .store import (FORMAT_VERSION, StoreFormatError, load_states, read_manifest,
                    read_window, write_manifest, write_window)

__all__ = [
    "PlaneWaveBasis", "make_basis", "fd_laplacian", "fd_solve", "EigenState",
    "SolverSettings", "SpectralWindow", "boundary_residual", "evaluate_state",
    "solve_range", "solve_window", "weyl_count", "FORMAT_VERSION", "StoreFormatError",
    "load_states", "read_manifest", "read_window", "write_manifest", "write_window",
]
