"""spdelab: spectral Galerkin simulation and bound checking for dissipative SPDEs."""

__version__ = "0.1.0"
