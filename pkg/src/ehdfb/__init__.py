"""Two-phase free boundary diagnostics for electrohydrodynamic water waves.

Closed-form corner profiles, lattice fields, the EHD energy, Weiss and
frequency monotonicity diagnostics, a smoothed-energy minimizer and a
singularity classifier.
"""

__version__ = "0.1.0"
