"""Multi-coil MRI reconstruction: classical, untrained-generator and self-supervised solvers."""

__version__ = "0.1.0"
