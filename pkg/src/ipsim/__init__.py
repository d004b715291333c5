"""Interactive-proof simulator for resource-constrained verifiers.

Library and experiment runner for interactive proofs between single-copy
quantum (or low-memory classical) verifiers and unconstrained untrusted
provers: purity testing, verified tomography, agnostic rank-k tomography,
agnostic stabilizer learning and streaming uniformity testing, plus the
generic distinguisher transformation that shows why classical-channel
delegation cannot help.
"""

__version__ = "0.1.0"
