"""Two-phase Stokes flow driven by surface tension on moving fitted iso-parametric meshes."""

__version__ = "0.1.0"
